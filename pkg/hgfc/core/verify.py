"""
Dual feasibility, slower benchmarks, competitive reports and HRDF dual fitting
"""
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from hgfc.config import settings
from hgfc.core.costfn import CostFunction, curvature_K
from hgfc.core.duals import BOUNDARY, MIDPOINT, DualSolution
from hgfc.core.flow_oracle import brute_force_opt, build_offline, integerize_speed, solve_min_cost
from hgfc.core.model import (
    AnyInstance,
    DiscreteInstance,
    DiscreteJob,
    Schedule,
    ensure_discrete,
    fractional_cost,
    integral_cost,
)
from hgfc.core.unrelated import lp_lower_bound
from hgfc.exceptions import ValidationError

logger = structlog.get_logger()

__all__ = [
    "DualSolution",
    "MIDPOINT",
    "BOUNDARY",
    "Violation",
    "check_dual_feasibility",
    "dual_objective_slow",
    "slow_speed",
    "slower_benchmark",
    "RunOutput",
    "CompetitiveReport",
    "competitive_bound",
    "competitive_report",
    "HRDFResult",
    "IdentityReport",
    "hrdf_run_and_fit",
]

ORACLE = "oracle"
LP = "lp"
BRUTE = "brute"
BENCHMARKS = (ORACLE, LP, BRUTE)


# ========== DUAL FEASIBILITY ==========

@dataclass(frozen=True)
class Violation:
    machine: int
    job: int
    slot: int
    slack: float

    def to_dict(self) -> Dict[str, Any]:
        return {"machine": self.machine, "job": self.job, "slot": self.slot, "slack": self.slack}


def check_dual_feasibility(
    duals: DualSolution,
    instance: Union[AnyInstance, DiscreteInstance],
    tolerance: Optional[float] = None
) -> List[Violation]:
    """
    Every constraint alpha_j / v_ij <= beta_it + g_ij(t) + d_ij with slack below -tolerance

    Slots run from each job's release to one past the later of the instance
    horizon and the last slot carrying beta.
    """
    tol = settings.feasibility_tolerance if tolerance is None else tolerance
    dinst = ensure_discrete(instance, duals.delta)
    delta = dinst.delta
    last = max(dinst.horizon, duals.last_slot + 1) + 1
    found = []
    for job in dinst.jobs:
        alpha = duals.alpha.get(job.id, 0.0)
        for i in range(dinst.machines):
            rate = alpha / (job.slots[i] * delta)
            g = job.costs[i]
            d = duals.offset(i, job.id)
            slots = np.arange(job.release_slot, last)
            points = (slots + 0.5) * delta if duals.convention == MIDPOINT else slots * delta
            costs = g.values(points)
            for s, c in zip(slots, costs):
                slack = duals.beta_at(i, int(s)) + float(c) + d - rate
                if slack < -tol:
                    found.append(Violation(machine=i, job=job.id, slot=int(s), slack=slack))
    if found:
        logger.warning("dual_infeasible", violations=len(found), worst=min(v.slack for v in found))
    return found


def dual_objective_slow(duals: DualSolution) -> float:
    """sum alpha - integral of beta / (1 + epsilon)"""
    return sum(duals.alpha.values()) - duals.beta_integral() / (1.0 + duals.epsilon)


# ========== BENCHMARKS ==========

def slow_speed(epsilon: float) -> Fraction:
    """1 / (1 + epsilon) as a bounded-denominator fraction"""
    if epsilon < 0:
        raise ValidationError("epsilon must be nonnegative", field="epsilon")
    return integerize_speed(1 / integerize_speed(1.0 + epsilon))


def slower_benchmark(
    instance: Union[AnyInstance, DiscreteInstance],
    epsilon: float,
    kind: Optional[str] = None
) -> float:
    """
    Offline benchmark on machines of speed 1 / (1 + epsilon)

    Args:
        instance: Instance to benchmark
        epsilon: Speed augmentation
        kind: oracle (flow optimum), lp (relaxation with d offsets) or
            brute (exhaustive, unit speed only); defaults to oracle on one
            machine and lp otherwise

    Returns:
        Benchmark value
    """
    dinst = ensure_discrete(instance)
    kind = kind or (ORACLE if dinst.machines == 1 else LP)
    if kind not in BENCHMARKS:
        raise ValidationError(f"Unknown benchmark {kind}", field="benchmark")
    speed = slow_speed(epsilon)
    if kind == LP:
        return lp_lower_bound(dinst, speed=speed)
    if dinst.machines != 1:
        raise ValidationError(f"Benchmark {kind} needs a single machine", field="benchmark")
    if kind == BRUTE:
        if speed != 1:
            raise ValidationError("Brute force runs at unit speed only", field="epsilon")
        return brute_force_opt(dinst)
    if not dinst.jobs:
        return 0.0
    return solve_min_cost(build_offline(dinst, speed=speed)).value


# ========== COMPETITIVE REPORT ==========

@dataclass(frozen=True)
class RunOutput:
    """What any algorithm run hands to the verifier"""

    algorithm: str
    instance: DiscreteInstance
    schedule: Schedule
    duals: Optional[DualSolution] = None
    ledger: Tuple[Any, ...] = ()
    theta: Optional[float] = None


@dataclass(frozen=True)
class CompetitiveReport:
    algorithm: str
    alg_cost: float
    benchmark_cost: float
    benchmark_kind: str
    dual_objective: Optional[float]
    speed_factor: float
    ratio: float
    bound: float
    passed: bool
    K: float
    theta: Optional[float]
    weak_duality_ok: bool
    dual_violations: int
    ledger_summary: Mapping[str, int] = field(default_factory=dict)

    @property
    def invariants_ok(self) -> bool:
        summary = self.ledger_summary
        return (
            self.passed
            and self.weak_duality_ok
            and self.dual_violations == 0
            and summary.get("lemma_violations", 0) == 0
            and summary.get("theta_failures", 0) == 0
            and summary.get("k_failures", 0) == 0
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "algorithm": self.algorithm,
            "alg_cost": self.alg_cost,
            "benchmark_cost": self.benchmark_cost,
            "benchmark_kind": self.benchmark_kind,
            "dual_objective": self.dual_objective,
            "speed_factor": self.speed_factor,
            "ratio": self.ratio,
            "bound": self.bound,
            "passed": self.passed,
            "K": self.K,
            "theta": self.theta,
            "weak_duality_ok": self.weak_duality_ok,
            "dual_violations": self.dual_violations,
            "ledger_summary": dict(self.ledger_summary),
            "invariants_ok": self.invariants_ok,
        }


def competitive_bound(algorithm: str, epsilon: float, K: float, theta: Optional[float] = None) -> float:
    """
    Ratio guaranteed at speed 1 + epsilon

    (1 + eps) / (1 + eps - K) for the flow-based algorithm, (1 + eps) theta /
    (1 + eps - K theta) for dispatch-and-insert; infinite when the
    denominator is not positive. HDF is optimal, HRDF carries no bound here.
    """
    speed = 1.0 + epsilon
    if algorithm == "hdf":
        return 1.0
    if algorithm == "alg2":
        denominator = speed - K
        return speed / denominator if denominator > 0 else math.inf
    if algorithm == "alg3":
        th = theta if theta is not None else 1.0
        denominator = speed - K * th
        return speed * th / denominator if denominator > 0 else math.inf
    return math.inf


def _ledger_summary(ledger: Sequence[Any]) -> Dict[str, int]:
    summary = {"arrivals": len(ledger)}
    summary["lemma_violations"] = sum(1 for rec in ledger if not getattr(rec, "lemma_ok", True))
    summary["postponement_violations"] = sum(1 for rec in ledger if not getattr(rec, "postponement_ok", True))
    summary["theta_failures"] = sum(1 for rec in ledger if not getattr(rec, "theta_ok", True))
    summary["k_failures"] = sum(1 for rec in ledger if not getattr(rec, "k_ok", True))
    return summary


def competitive_report(
    run: RunOutput,
    epsilon: float,
    benchmark: Optional[str] = None,
    K: Optional[float] = None,
    theta: Optional[float] = None
) -> CompetitiveReport:
    """
    Ratio of the run's fractional cost to the slower benchmark, with its bound

    Args:
        run: Completed algorithm run
        epsilon: Speed augmentation of the algorithm over the benchmark
        benchmark: oracle, lp or brute; see slower_benchmark
        K: Curvature constant, computed from the costs when omitted
        theta: Stretch constant for dispatch-and-insert runs

    Returns:
        CompetitiveReport; PASS iff ratio <= bound within ratio_tolerance
    """
    dinst = run.instance
    kind = benchmark or (ORACLE if dinst.machines == 1 else LP)
    alg_cost = fractional_cost(run.schedule, dinst) if dinst.jobs else 0.0
    bench = slower_benchmark(dinst, epsilon, kind)
    costs: List[CostFunction] = [g for j in dinst.jobs for g in j.costs]
    k_value = K if K is not None else curvature_K(costs)
    th = theta if theta is not None else run.theta

    dual_value = None
    weak_ok = True
    violations = 0
    if run.duals is not None:
        duals = run.duals.with_epsilon(epsilon)
        dual_value = dual_objective_slow(duals)
        if kind != BRUTE:
            weak_ok = dual_value <= bench + settings.feasibility_tolerance * (1.0 + abs(bench))
        violations = len(check_dual_feasibility(duals, dinst))

    if bench > 0:
        ratio = alg_cost / bench
    else:
        ratio = 1.0 if alg_cost <= settings.feasibility_tolerance else math.inf
    bound = competitive_bound(run.algorithm, epsilon, k_value, th)
    passed = ratio <= bound * (1.0 + settings.ratio_tolerance)
    summary = _ledger_summary(run.ledger)

    report = CompetitiveReport(
        algorithm=run.algorithm,
        alg_cost=alg_cost,
        benchmark_cost=bench,
        benchmark_kind=kind,
        dual_objective=dual_value,
        speed_factor=1.0 + epsilon,
        ratio=ratio,
        bound=bound,
        passed=passed,
        K=k_value,
        theta=th,
        weak_duality_ok=weak_ok,
        dual_violations=violations,
        ledger_summary=summary
    )
    if not report.invariants_ok:
        logger.warning("competitive_check_failed", **{k: v for k, v in report.to_dict().items() if k != "ledger_summary"})
    return report


# ========== HRDF DUAL FITTING ==========

def _weight(job: DiscreteJob, machine: int, delta: float) -> Optional[float]:
    key = job.costs[machine].density_key()
    if key is None:
        return None
    return key[1] * job.slots[machine] * delta


class _HRDFMachine:
    """HRDF on one machine; completed jobs keep their realized completion"""

    def __init__(self, machine: int, delta: float):
        self.machine = machine
        self.delta = delta
        self.jobs: Dict[int, DiscreteJob] = {}
        self.residuals: Dict[int, int] = {}
        self.completions: Dict[int, int] = {}
        self.assignment: Dict[int, int] = {}
        self.clock = 0

    def _pick(self, slot: int, residuals: Mapping[int, int], jobs: Mapping[int, DiscreteJob]) -> Optional[int]:
        ready = [j for j, left in residuals.items() if left > 0]
        if not ready:
            return None

        def priority(job_id: int) -> Tuple[float, int]:
            job = jobs[job_id]
            weight = _weight(job, self.machine, self.delta)
            if weight is None:
                length = job.slots[self.machine] * self.delta
                weight = length * job.costs[self.machine](max(slot * self.delta, job.costs[self.machine].shift))
            return weight / (residuals[job_id] * self.delta), -job_id

        return max(ready, key=priority)

    def simulate(self, extra: Optional[DiscreteJob] = None) -> Tuple[Dict[int, int], Dict[int, int]]:
        """Plan from the clock with no further arrivals: (slot -> job, completions)"""
        jobs = dict(self.jobs)
        residuals = dict(self.residuals)
        if extra is not None:
            jobs[extra.id] = extra
            residuals[extra.id] = extra.slots[self.machine]
        plan: Dict[int, int] = {}
        completions = dict(self.completions)
        slot = self.clock
        while any(residuals.values()):
            job = self._pick(slot, residuals, jobs)
            plan[slot] = job
            residuals[job] -= 1
            if residuals[job] == 0:
                completions[job] = slot + 1
            slot += 1
        return plan, completions

    def total_cost(self, plan: Mapping[int, int], completions: Mapping[int, int], jobs: Mapping[int, DiscreteJob], fractional: bool) -> float:
        if fractional:
            slots = list(self.assignment.items()) + list(plan.items())
            return sum(
                jobs[j].costs[self.machine]((s + 0.5) * self.delta) * self.delta
                for s, j in slots
            )
        total = 0.0
        for job_id, c in completions.items():
            job = jobs[job_id]
            length = job.slots[self.machine] * self.delta
            total += length * job.costs[self.machine](c * self.delta)
        return total

    def increase(self, job: DiscreteJob, fractional: bool) -> float:
        jobs_with = dict(self.jobs)
        jobs_with[job.id] = job
        plan, completions = self.simulate()
        before = self.total_cost(plan, completions, self.jobs, fractional)
        plan_n, completions_n = self.simulate(job)
        after = self.total_cost(plan_n, completions_n, jobs_with, fractional)
        return after - before

    def add(self, job: DiscreteJob) -> None:
        self.jobs[job.id] = job
        self.residuals[job.id] = job.slots[self.machine]

    def advance(self, until: Optional[int] = None) -> None:
        plan, _ = self.simulate()
        stop = max(plan, default=self.clock - 1) + 1 if until is None else until
        for slot in range(self.clock, stop):
            job = plan.get(slot)
            if job is None:
                continue
            self.assignment[slot] = job
            self.residuals[job] -= 1
            if self.residuals[job] == 0:
                self.completions[job] = slot + 1
        self.clock = max(self.clock, stop)


@dataclass(frozen=True)
class IdentityReport:
    k: Optional[float]
    integral_beta_accrual: float
    integral_beta_remaining: float
    sum_alpha_hat: float
    remaining_closed_form: float
    flow_cost: float
    fractional_cost: float
    fractional: bool
    per_machine: Mapping[int, Mapping[str, float]] = field(default_factory=dict)

    @property
    def target(self) -> float:
        """Cost the alpha-hat increments add up to"""
        return self.fractional_cost if self.fractional else self.flow_cost

    @property
    def remaining_ok(self) -> bool:
        """Remaining-time integral against sum v (g(C) - g(r))"""
        tol = settings.ratio_tolerance * (1.0 + abs(self.remaining_closed_form))
        return abs(self.integral_beta_remaining - self.remaining_closed_form) <= tol

    @property
    def identity_ok(self) -> bool:
        tol = settings.ratio_tolerance * (1.0 + abs(self.sum_alpha_hat))
        return (
            abs(self.sum_alpha_hat - self.target) <= tol
            and abs(self.integral_beta_accrual - self.flow_cost) <= tol
            and self.remaining_ok
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "integral_beta_accrual": self.integral_beta_accrual,
            "integral_beta_remaining": self.integral_beta_remaining,
            "sum_alpha_hat": self.sum_alpha_hat,
            "remaining_closed_form": self.remaining_closed_form,
            "remaining_ok": self.remaining_ok,
            "flow_cost": self.flow_cost,
            "fractional_cost": self.fractional_cost,
            "fractional": self.fractional,
            "identity_ok": self.identity_ok,
            "per_machine": {str(i): dict(v) for i, v in self.per_machine.items()},
        }


@dataclass(frozen=True)
class HRDFResult:
    instance: DiscreteInstance
    schedule: Schedule
    alpha_hat: Mapping[int, float]
    machine_of: Mapping[int, int]
    completions: Mapping[int, int]
    report: IdentityReport

    def _alive(self, machine: int, t: float) -> List[DiscreteJob]:
        delta = self.instance.delta
        return [
            j for j in self.instance.jobs
            if self.machine_of[j.id] == machine
            and j.release_slot * delta <= t < self.completions[j.id] * delta
        ]

    def beta_hat_accrual(self, t: float, machine: int = 0) -> float:
        """sum over alive jobs of the unscaled cost's slope at t"""
        total = 0.0
        for j in self._alive(machine, t):
            length = j.slots[machine] * self.instance.delta
            total += length * j.costs[machine].derivative(t)
        return total

    def beta_hat_remaining(self, t: float, machine: int = 0) -> float:
        """sum over alive jobs of the unscaled cost's slope at r + (C - t)"""
        delta = self.instance.delta
        total = 0.0
        for j in self._alive(machine, t):
            length = j.slots[machine] * delta
            r = j.release_slot * delta
            total += length * j.costs[machine].derivative(r + self.completions[j.id] * delta - t)
        return total

    def beta_curve(self, machine: int = 0) -> List[Tuple[float, float, float]]:
        """(t, accrual, remaining) at slot midpoints"""
        delta = self.instance.delta
        end = max((c for j, c in self.completions.items() if self.machine_of[j] == machine), default=0)
        return [
            ((s + 0.5) * delta, self.beta_hat_accrual((s + 0.5) * delta, machine),
             self.beta_hat_remaining((s + 0.5) * delta, machine))
            for s in range(end)
        ]


def _integrate_per_slot(curve, first: int, last: int, delta: float) -> float:
    # 8-node Gauss-Legendre per slot, exact for polynomial pieces of degree <= 15
    nodes, weights = np.polynomial.legendre.leggauss(8)
    total = 0.0
    for s in range(first, last):
        a = s * delta
        points = a + (nodes + 1.0) * delta / 2.0
        total += float(np.dot(weights, [curve(float(p)) for p in points])) * delta / 2.0
    return total


def hrdf_run_and_fit(
    instance: Union[AnyInstance, DiscreteInstance],
    k: Optional[float] = None,
    fractional: bool = False
) -> HRDFResult:
    """
    Run highest residual density first and fit its beta-hat / alpha-hat duals

    Each arrival goes to the machine whose HRDF plan grows the least (ties to
    the lowest id); alpha-hat is that growth in integral cost, or in
    fractional cost with fractional=True.

    Args:
        instance: Arrival stream, typically with costs w (t - r)^k / v
        k: Exponent, carried into the report
        fractional: Measure alpha-hat on the fractional objective

    Returns:
        HRDFResult with both beta-hat forms and the identity report
    """
    dinst = ensure_discrete(instance)
    delta = dinst.delta
    machines = [_HRDFMachine(i, delta) for i in range(dinst.machines)]
    alpha_hat: Dict[int, float] = {}
    machine_of: Dict[int, int] = {}

    for job in sorted(dinst.jobs, key=lambda j: (j.release_slot, j.id)):
        for m in machines:
            m.advance(job.release_slot)
        increases = [m.increase(job, fractional) for m in machines]
        best = min(range(len(machines)), key=lambda i: (increases[i], i))
        machines[best].add(job)
        alpha_hat[job.id] = increases[best]
        machine_of[job.id] = best
        logger.debug("hrdf_dispatched", job=job.id, machine=best, alpha_hat=increases[best])
    for m in machines:
        m.advance()

    rows = [m.assignment for m in machines]
    schedule = Schedule.from_assignment(delta, rows)
    completions = {j: c for m in machines for j, c in m.completions.items()}
    flow = integral_cost(schedule, dinst) if dinst.jobs else 0.0
    frac = fractional_cost(schedule, dinst) if dinst.jobs else 0.0

    result = HRDFResult(
        instance=dinst,
        schedule=schedule,
        alpha_hat=alpha_hat,
        machine_of=machine_of,
        completions=completions,
        report=IdentityReport(k, 0.0, 0.0, 0.0, 0.0, flow, frac, fractional)
    )
    per_machine: Dict[int, Dict[str, float]] = {}
    accrual_total = remaining_total = closed_total = 0.0
    for m in machines:
        first = min((dinst.job(j).release_slot for j in m.jobs), default=0)
        last = max((completions[j] for j in m.jobs), default=0)
        accrual = _integrate_per_slot(lambda t, i=m.machine: result.beta_hat_accrual(t, i), first, last, delta)
        remaining = _integrate_per_slot(lambda t, i=m.machine: result.beta_hat_remaining(t, i), first, last, delta)
        # the remaining-time integral telescopes per job
        closed = sum(
            dinst.job(j).slots[m.machine] * delta * (
                dinst.job(j).costs[m.machine](completions[j] * delta)
                - dinst.job(j).costs[m.machine](dinst.job(j).release_slot * delta)
            )
            for j in m.jobs
        )
        per_machine[m.machine] = {
            "integral_beta_accrual": accrual,
            "integral_beta_remaining": remaining,
            "remaining_closed_form": closed,
            "sum_alpha_hat": sum(alpha_hat[j] for j in m.jobs),
        }
        accrual_total += accrual
        remaining_total += remaining
        closed_total += closed

    report = IdentityReport(
        k=k,
        integral_beta_accrual=accrual_total,
        integral_beta_remaining=remaining_total,
        sum_alpha_hat=sum(alpha_hat.values()),
        remaining_closed_form=closed_total,
        flow_cost=flow,
        fractional_cost=frac,
        fractional=fractional,
        per_machine=per_machine
    )
    logger.info(
        "hrdf_fitted",
        jobs=len(dinst.jobs),
        machines=dinst.machines,
        flow_cost=flow,
        sum_alpha_hat=report.sum_alpha_hat,
        identity_ok=report.identity_ok
    )
    return replace(result, report=report)
