"""
Ledger service
JSONL ledgers of per-arrival records closed by a totals record
"""
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pydantic
import structlog

from hgfc.config import settings
from hgfc.core.verify import competitive_bound
from hgfc.exceptions import ValidationError
from hgfc.models.schemas import LedgerTotals, SummaryRow

logger = structlog.get_logger()

PathLike = Union[str, Path]

ARRIVAL = "arrival"
IDENTITY = "identity"
TOTALS = "totals"


@dataclass
class LedgerContents:
    arrivals: List[Dict[str, Any]]
    identity: Optional[Dict[str, Any]]
    totals: LedgerTotals


@dataclass
class LedgerReplay:
    """Summary row re-derived from a ledger, with every failed check"""

    path: str
    row: SummaryRow
    failures: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _same(stored: float, derived: float) -> bool:
    if math.isinf(stored) or math.isinf(derived):
        return stored == derived
    return math.isclose(stored, derived, rel_tol=1e-12, abs_tol=1e-12)


class LedgerService:
    """
    Service for writing and replaying run ledgers
    """

    @staticmethod
    def write(
        path: PathLike,
        arrivals: Sequence[Dict[str, Any]],
        totals: LedgerTotals,
        identity: Optional[Dict[str, Any]] = None
    ) -> Path:
        """
        Write one ledger file

        Args:
            path: Target .jsonl file
            arrivals: Per-arrival records in arrival order
            totals: Closing totals record
            identity: HRDF identity report, when the run has one

        Returns:
            Path written
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps({"kind": ARRIVAL, **record}, sort_keys=True) for record in arrivals]
        if identity is not None:
            lines.append(json.dumps({"kind": IDENTITY, **identity}, sort_keys=True))
        lines.append(json.dumps(totals.model_dump(), sort_keys=True))
        path.write_text("\n".join(lines) + "\n")

        logger.info(
            "ledger_written",
            path=str(path),
            instance_id=totals.instance_id,
            arrivals=len(arrivals),
            passed=totals.passed
        )
        return path

    @staticmethod
    def read(path: PathLike) -> LedgerContents:
        """
        Parse a ledger file

        Raises:
            ValidationError: Missing file, bad JSON or no totals record
        """
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"Ledger {path} does not exist", field="ledger")

        arrivals: List[Dict[str, Any]] = []
        identity = None
        totals = None
        for number, line in enumerate(path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValidationError(f"Ledger {path} line {number} is not JSON: {e.msg}", field="ledger")
            kind = record.pop("kind", None)
            if kind == ARRIVAL:
                arrivals.append(record)
            elif kind == IDENTITY:
                identity = record
            elif kind == TOTALS:
                try:
                    totals = LedgerTotals.model_validate({"kind": TOTALS, **record})
                except pydantic.ValidationError as e:
                    raise ValidationError(f"Ledger {path} totals are malformed: {e.errors()[0]['msg']}", field="ledger")
            else:
                raise ValidationError(f"Ledger {path} line {number} has unknown kind {kind}", field="ledger")
        if totals is None:
            raise ValidationError(f"Ledger {path} has no totals record", field="ledger")
        return LedgerContents(arrivals=arrivals, identity=identity, totals=totals)

    @staticmethod
    def check_arrival(record: Dict[str, Any]) -> List[str]:
        """
        Re-check the inequalities an arrival record carries

        Returns:
            Names of the failed checks
        """
        failed = []
        if "alpha_new" in record:
            alpha = record["alpha_new"]
            if record["delta_alg"] > alpha + settings.duality_tolerance * (1.0 + abs(alpha)):
                failed.append("delta_alg_above_alpha")
        if "alpha_n" in record:
            delta_alg = record["delta_alg"]
            tol = settings.feasibility_tolerance * (1.0 + abs(delta_alg))
            # a null audit_theta is unbounded
            bound = record.get("audit_theta", record["theta_bound"])
            if bound is not None and delta_alg > bound * record["alpha_n"] + tol:
                failed.append("theta_audit")
            increase = record["beta_increase"]
            tol = settings.feasibility_tolerance * (1.0 + abs(increase))
            if increase > record["k_bound"] * delta_alg + tol:
                failed.append("k_audit")
        return failed

    @staticmethod
    def summary_row(totals: LedgerTotals) -> SummaryRow:
        return SummaryRow(
            instance_id=totals.instance_id,
            family=totals.family,
            n=totals.n,
            m=totals.m,
            K=totals.K,
            theta=totals.theta,
            speed=totals.speed,
            alg_cost=totals.alg_cost,
            benchmark=totals.benchmark,
            ratio=totals.ratio,
            bound=totals.bound,
            passed=totals.passed
        )

    @staticmethod
    def replay(path: PathLike) -> LedgerReplay:
        """
        Re-derive ratio, bound and verdict from a ledger file alone

        Args:
            path: Ledger written by write()

        Returns:
            LedgerReplay whose row is rebuilt from alg_cost and benchmark, and
            whose failures list every mismatch or failed inequality
        """
        contents = LedgerService.read(path)
        totals = contents.totals
        failures: List[str] = []

        for record in contents.arrivals:
            for name in LedgerService.check_arrival(record):
                failures.append(f"job {record.get('job')}: {name}")

        if totals.benchmark > 0:
            ratio = totals.alg_cost / totals.benchmark
        else:
            ratio = 1.0 if totals.alg_cost <= settings.feasibility_tolerance else math.inf
        bound = competitive_bound(totals.algorithm, totals.epsilon, totals.K, totals.theta)
        passed = ratio <= bound * (1.0 + settings.ratio_tolerance)

        if not _same(totals.ratio, ratio):
            failures.append(f"ratio mismatch: stored {totals.ratio}, derived {ratio}")
        if not _same(totals.bound, bound):
            failures.append(f"bound mismatch: stored {totals.bound}, derived {bound}")
        if passed != totals.passed:
            failures.append("verdict mismatch")
        if not passed:
            failures.append(f"ratio {ratio} exceeds bound {bound}")
        if not totals.weak_duality_ok:
            failures.append("weak duality")
        if totals.dual_violations:
            failures.append(f"{totals.dual_violations} dual constraint violations")
        if contents.identity is not None and not contents.identity.get("identity_ok", True):
            failures.append("hrdf identity")

        row = LedgerService.summary_row(totals).model_copy(
            update={"ratio": ratio, "bound": bound, "passed": passed}
        )
        if failures:
            logger.warning("ledger_replay_failed", path=str(path), failures=len(failures))
        return LedgerReplay(path=str(path), row=row, failures=failures)


# Global instance
ledger_service = LedgerService()
