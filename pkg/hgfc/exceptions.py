"""
Custom exceptions and error handling
"""
import json
import sys
from typing import Any, Dict, Optional, TextIO

import structlog

from hgfc.models.schemas import ErrorResponse, StandardResponse

logger = structlog.get_logger()

EXIT_OK = 0
EXIT_INVARIANT_FAILED = 1
EXIT_DOMAIN_ERROR = 2
EXIT_INTERNAL_ERROR = 70


class HGFCException(Exception):
    """Base exception for scheduling and verification errors"""

    def __init__(
        self,
        message: str,
        code: str = "unknown_error",
        exit_code: int = EXIT_DOMAIN_ERROR,
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.code = code
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(self.message)


class ValidationError(HGFCException):
    """Malformed instance, cost spec or argument"""

    def __init__(self, message: str, field: Optional[str] = None):
        details = {}
        if field:
            details["field"] = field
        super().__init__(
            message=message,
            code="validation_error",
            details=details
        )


class BadConfigError(HGFCException):
    """Experiment configuration cannot generate instances"""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(
            message=message,
            code="bad_config",
            details={"field": field} if field else {}
        )


class NonCommensurateError(HGFCException):
    """Release or length is not a multiple of the slot width"""

    def __init__(self, job_id: int, field: str, value: float, delta: float):
        super().__init__(
            message=f"Job {job_id} {field}={value} is not a multiple of delta={delta}",
            code="non_commensurate",
            details={"job": job_id, "field": field, "value": value, "delta": delta}
        )


class InfeasibleScheduleError(HGFCException):
    """Schedule violates slot counts, releases or machine assignment"""

    def __init__(self, message: str, job_id: Optional[int] = None):
        super().__init__(
            message=message,
            code="infeasible_schedule",
            details={"job": job_id} if job_id is not None else {}
        )


class IncompleteScheduleError(HGFCException):
    """Some job still has residual work at the horizon"""

    def __init__(self, job_id: int, missing_slots: int):
        super().__init__(
            message=f"Job {job_id} is missing {missing_slots} slots",
            code="incomplete_schedule",
            details={"job": job_id, "missing_slots": missing_slots}
        )


class NotDifferentiableError(HGFCException):
    """Second derivative requested at a piecewise-linear breakpoint"""

    def __init__(self, t: float):
        super().__init__(
            message=f"Cost function is not twice differentiable at t={t}",
            code="not_differentiable",
            details={"t": t}
        )


class UnboundedCurvatureError(HGFCException):
    """sup t g''/g' diverges on the probed horizon"""

    def __init__(self, family: str, value: float):
        super().__init__(
            message=f"Curvature of {family} cost diverges (probe reached {value})",
            code="unbounded_curvature",
            details={"family": family, "value": value}
        )


class UnboundedThetaError(HGFCException):
    """Stretch ratio does not stabilize on the probed horizon"""

    def __init__(self, family: str, value: float):
        super().__init__(
            message=f"Stretch constant of {family} cost does not stabilize (last {value})",
            code="unbounded_theta",
            details={"family": family, "value": value}
        )


class NonIntegralCapacityError(HGFCException):
    """Speed cannot be written with a small enough denominator"""

    def __init__(self, speed: float, max_denominator: int):
        super().__init__(
            message=f"Speed {speed} has no rational form with denominator <= {max_denominator}",
            code="non_integral_capacity",
            details={"speed": speed, "max_denominator": max_denominator}
        )


class InfeasibleNetworkError(HGFCException):
    """Horizon too short to route every supply unit"""

    def __init__(self, supply: int, routed: int):
        super().__init__(
            message=f"Only {routed} of {supply} supply units could be routed",
            code="infeasible_network",
            details={"supply": supply, "routed": routed}
        )


class NonOptimalInputError(HGFCException):
    """Seed duals do not close the duality gap"""

    def __init__(self, primal: float, dual: float):
        super().__init__(
            message=f"Seed duals are not optimal: primal={primal}, dual={dual}",
            code="non_optimal_input",
            details={"primal": primal, "dual": dual, "gap": primal - dual}
        )


class TooLargeError(HGFCException):
    """Instance exceeds the brute-force enumeration cap"""

    def __init__(self, slots: int, cap: int):
        super().__init__(
            message=f"{slots} slots exceed brute-force cap {cap}",
            code="too_large",
            details={"slots": slots, "cap": cap}
        )


class NegativeHeightError(HGFCException):
    """Dual conversion drove a step or the beta curve below zero"""

    def __init__(self, subjob: int, height: float):
        super().__init__(
            message=f"Dual conversion made step {subjob} negative ({height})",
            code="negative_height",
            details={"subjob": subjob, "height": height}
        )


class OffGridError(HGFCException):
    """Insertion time is not a slot boundary"""

    def __init__(self, t_star: float, delta: float):
        super().__init__(
            message=f"Insertion time {t_star} is not on the slot grid of width {delta}",
            code="off_grid",
            details={"t_star": t_star, "delta": delta}
        )


class NonConvexCostError(HGFCException):
    """Unrelated-machine run requires convex costs"""

    def __init__(self, job_id: int, machine: int, family: str):
        super().__init__(
            message=f"Cost of job {job_id} on machine {machine} ({family}) is not convex",
            code="non_convex_cost",
            details={"job": job_id, "machine": machine, "family": family}
        )


def create_error_response(
    run_id: str,
    code: str,
    message: str,
    details: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """
    Create standard error response envelope
    """
    error = ErrorResponse(code=code, message=message, details=details or {})
    return StandardResponse(ok=False, error=error.model_dump(), meta={"run_id": run_id}).model_dump()


def handle_hgfc_exception(
    exc: HGFCException,
    run_id: str = "unknown",
    stream: Optional[TextIO] = None
) -> int:
    """
    Log a domain error, print its envelope and return the process exit code
    """
    logger.error(
        "exception_handled",
        run_id=run_id,
        error_code=exc.code,
        error_message=exc.message,
        exit_code=exc.exit_code
    )
    envelope = create_error_response(run_id, exc.code, exc.message, exc.details)
    print(json.dumps(envelope, default=str), file=stream or sys.stderr)
    return exc.exit_code


def handle_unexpected_exception(
    exc: Exception,
    run_id: str = "unknown",
    stream: Optional[TextIO] = None
) -> int:
    """
    Catch-all handler for the CLI
    """
    logger.error(
        "unhandled_exception",
        run_id=run_id,
        error=str(exc),
        exc_info=True
    )
    envelope = create_error_response(
        run_id=run_id,
        code="internal_error",
        message="An unexpected error occurred",
        details={"error": str(exc)}
    )
    print(json.dumps(envelope, default=str), file=stream or sys.stderr)
    return EXIT_INTERNAL_ERROR
