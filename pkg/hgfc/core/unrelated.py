"""
Unrelated machines: dispatch-and-insert scheduling with beta-hat duals, LP lower bound
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from scipy import sparse
from scipy.optimize import linprog

from hgfc.config import settings
from hgfc.core.costfn import CostFunction, curvature_K, shift_stretch, stretch_theta
from hgfc.core.duals import BOUNDARY, DualSolution
from hgfc.core.flow_oracle import integerize_speed
from hgfc.core.model import (
    AnyInstance,
    DiscreteInstance,
    DiscreteJob,
    Interval,
    Schedule,
    SlotInterval,
    ensure_discrete,
)
from hgfc.exceptions import InfeasibleNetworkError, NonConvexCostError, OffGridError, ValidationError

logger = structlog.get_logger()


def discrete_d(g: CostFunction, release_slot: int, slots: int, delta: float) -> float:
    """Mean midpoint cost of the earliest `slots` slots from release"""
    if slots <= 0:
        raise ValidationError("d needs a positive length", field="slots")
    mids = (np.arange(release_slot, release_slot + slots) + 0.5) * delta
    return float(np.mean(g.values(mids)))


# ========== MACHINE STATE ==========

def _merge(intervals: Sequence[SlotInterval]) -> Tuple[SlotInterval, ...]:
    merged: List[SlotInterval] = []
    for a, b in sorted(intervals):
        if b <= a:
            continue
        if merged and merged[-1][1] == a:
            merged[-1] = (merged[-1][0], b)
        else:
            merged.append((a, b))
    return tuple(merged)


@dataclass(frozen=True)
class MachineState:
    """Planned slot intervals of every job dispatched to one machine"""

    machine: int
    delta: float
    intervals: Mapping[int, Tuple[SlotInterval, ...]] = field(default_factory=dict)
    costs: Mapping[int, CostFunction] = field(default_factory=dict)
    clock: int = 0

    @property
    def end_slot(self) -> int:
        return max((b for ivs in self.intervals.values() for _, b in ivs), default=self.clock)

    @property
    def breakpoints(self) -> List[int]:
        return sorted({x for ivs in self.intervals.values() for iv in ivs for x in iv})

    def real_intervals(self) -> Dict[int, List[Interval]]:
        return {
            job: [(a * self.delta, b * self.delta) for a, b in ivs]
            for job, ivs in self.intervals.items()
        }

    def beta_hat(self, t: float) -> float:
        total = 0.0
        for job, ivs in self.intervals.items():
            g = self.costs[job]
            for a, b in ivs:
                end = b * self.delta
                if end > t:
                    total += g(end) - g(max(t, a * self.delta))
        return total

    def beta_hat_integral(self, r: float) -> float:
        """Exact integral of beta-hat over [r, inf)"""
        total = 0.0
        for job, ivs in self.intervals.items():
            g = self.costs[job]
            for a, b in ivs:
                lo, hi = max(a * self.delta, r), b * self.delta
                if hi <= lo:
                    continue
                total += (lo - r) * (g(hi) - g(lo)) + (hi - lo) * g(hi) - g.integral(lo, hi)
        return total

    def beta_hat_curve(self, first_slot: int, last_slot: int) -> Dict[int, float]:
        """beta-hat at slot boundaries, as per-slot beta values"""
        return {s: self.beta_hat(s * self.delta) for s in range(first_slot, last_slot)}

    def at(self, clock: int) -> "MachineState":
        return MachineState(self.machine, self.delta, self.intervals, self.costs, max(self.clock, clock))


def beta_hat_machine(state: MachineState, t: float) -> float:
    """Sum over jobs of the cost's total variation on their intervals from t on"""
    return state.beta_hat(t)


# ========== DISPATCH ==========

@dataclass(frozen=True)
class DispatchDecision:
    machine: int
    slot: int
    t_star: float
    alpha_n: float
    d: float


def dispatch_objective(job: DiscreteJob, state: MachineState, slot: int, d: float) -> float:
    """(beta-hat + g + d) * v for inserting job on state's machine at slot"""
    t = slot * state.delta
    g = job.costs[state.machine]
    length = job.slots[state.machine] * state.delta
    return (state.beta_hat(t) + g(t) + d) * length


def dispatch(job: DiscreteJob, machine_states: Sequence[MachineState]) -> DispatchDecision:
    """
    Machine and insertion slot minimizing (beta-hat + g + d) * v

    Candidates are the slot boundaries from the release to the first
    boundary past each machine's plan; ties go to the lowest machine, then
    the earliest slot. t* is searched on the grid only; positions strictly
    inside a slot are never considered, even at a lower objective.
    """
    best: Optional[DispatchDecision] = None
    for state in machine_states:
        i = state.machine
        d = discrete_d(job.costs[i], job.release_slot, job.slots[i], state.delta)
        first = max(job.release_slot, state.clock)
        last = max(first, state.end_slot)
        for slot in range(first, last + 1):
            value = dispatch_objective(job, state, slot, d)
            if best is None or value < best.alpha_n - 1e-12:
                best = DispatchDecision(
                    machine=i,
                    slot=slot,
                    t_star=slot * state.delta,
                    alpha_n=value,
                    d=d
                )
    if best is None:
        raise ValidationError("No machine to dispatch to", field="machines")
    return best


def insert_job(
    state: MachineState,
    job_id: int,
    slots: int,
    t_star: float,
    cost: CostFunction
) -> MachineState:
    """
    Place a job on [t_star, t_star + v) and shift every later fragment right by v

    Raises:
        OffGridError: t_star is not a slot boundary
    """
    ratio = t_star / state.delta
    slot = int(round(ratio))
    if abs(ratio - slot) > settings.commensurate_tolerance * max(1.0, abs(ratio)):
        raise OffGridError(t_star, state.delta)
    if slot < state.clock:
        raise ValidationError(f"Insertion at slot {slot} precedes the clock {state.clock}", field="t_star")
    if job_id in state.intervals:
        raise ValidationError(f"Job {job_id} is already on machine {state.machine}", field="job")

    moved: Dict[int, Tuple[SlotInterval, ...]] = {}
    for job, ivs in state.intervals.items():
        pieces: List[SlotInterval] = []
        for a, b in ivs:
            if b <= slot:
                pieces.append((a, b))
            elif a >= slot:
                pieces.append((a + slots, b + slots))
            else:
                pieces.append((a, slot))
                pieces.append((slot + slots, b + slots))
        moved[job] = _merge(pieces)
    moved[job_id] = ((slot, slot + slots),)
    costs = dict(state.costs)
    costs[job_id] = cost
    return MachineState(state.machine, state.delta, moved, costs, state.clock)


def insertion_cost(before: MachineState, after: MachineState, job_id: int) -> float:
    """
    Exact increase of the fractional cost caused by one insertion

    Insertions sit on slot boundaries, as dispatch only offers those.
    New interval integral plus, for every shifted fragment, the integral of
    g(t + v) - g(t) over its old position.
    """
    delta = before.delta
    (a, b), = after.intervals[job_id]
    shift = (b - a) * delta
    total = after.costs[job_id].integral(a * delta, b * delta)
    for job, ivs in before.intervals.items():
        g = before.costs[job]
        for lo, hi in ivs:
            if lo >= a:
                x, y = lo * delta, hi * delta
                total += g.integral(x + shift, y + shift) - g.integral(x, y)
            elif hi > a:
                x, y = a * delta, hi * delta
                total += g.integral(x + shift, y + shift) - g.integral(x, y)
    return total


def early_shift_stretch(
    before: MachineState,
    slot: int,
    slots: int,
    horizon: Optional[float] = None
) -> Optional[float]:
    """
    Largest shift stretch over fragments an insertion at slot pushes right
    while they sit less than v past their cost's shift

    Returns:
        None when every pushed fragment starts at least v into its cost
    """
    delta = before.delta
    v = slots * delta
    worst: Optional[float] = None
    for job, ivs in before.intervals.items():
        g = before.costs[job]
        for lo, hi in ivs:
            if hi <= slot:
                continue
            start = max(lo, slot) * delta
            if start - g.shift >= v:
                continue
            value = shift_stretch(g, v, start, horizon)
            worst = value if worst is None else max(worst, value)
    return worst


# ========== ONLINE ==========

@dataclass(frozen=True)
class UnrelatedArrivalRecord:
    job: int
    machine: int
    t_star: float
    alpha_n: float
    delta_alg: float
    beta_increase: float
    theta_bound: float
    k_bound: float
    shift_theta: Optional[float] = None

    @property
    def audit_theta(self) -> float:
        """theta_bound, widened by the stretch of fragments shifted from below v"""
        return self.theta_bound if self.shift_theta is None else max(self.theta_bound, self.shift_theta)

    @property
    def theta_audit(self) -> Optional[float]:
        return self.delta_alg / self.alpha_n if self.alpha_n > 0 else None

    @property
    def k_audit(self) -> Optional[float]:
        return self.beta_increase / self.delta_alg if self.delta_alg > 0 else None

    @property
    def theta_ok(self) -> bool:
        tol = settings.feasibility_tolerance * (1.0 + abs(self.delta_alg))
        if math.isinf(self.audit_theta):
            return True
        return self.delta_alg <= self.audit_theta * self.alpha_n + tol

    @property
    def k_ok(self) -> bool:
        tol = settings.feasibility_tolerance * (1.0 + abs(self.beta_increase))
        return self.beta_increase <= self.k_bound * self.delta_alg + tol

    def to_dict(self) -> Dict:
        return {
            "job": self.job,
            "machine": self.machine,
            "t_star": self.t_star,
            "alpha_n": self.alpha_n,
            "delta_alg": self.delta_alg,
            "theta_audit": self.theta_audit,
            "beta_increase": self.beta_increase,
            "K_audit": self.k_audit,
            "theta_bound": self.theta_bound,
            "shift_theta": self.shift_theta if self.shift_theta is None or math.isfinite(self.shift_theta) else None,
            "audit_theta": self.audit_theta if math.isfinite(self.audit_theta) else None,
            "k_bound": self.k_bound,
            "theta_ok": self.theta_ok,
            "k_ok": self.k_ok,
        }


@dataclass(frozen=True)
class UnrelatedRunResult:
    instance: DiscreteInstance
    schedule: Schedule
    duals: DualSolution
    ledger: Tuple[UnrelatedArrivalRecord, ...]
    machines: Tuple[MachineState, ...]
    theta: float
    theta_conservative: float
    K: float


def check_convex(instance: DiscreteInstance) -> None:
    for job in instance.jobs:
        for i, g in enumerate(job.costs):
            if not g.convex:
                raise NonConvexCostError(job.id, i, g.family)


def online_unrelated_run(
    instance: Union[AnyInstance, DiscreteInstance],
    theta: Optional[float] = None,
    K: Optional[float] = None,
    epsilon: float = 0.0
) -> UnrelatedRunResult:
    """
    Dispatch each arrival to the cheapest machine and position, never re-plan

    Args:
        instance: Arrival stream on m machines; costs must be convex
        theta: Bound for the per-arrival delta_alg <= theta * alpha_n audit,
            defaults to stretch_theta over the instance
        K: Bound for the beta-hat increase audit, defaults to curvature_K
        epsilon: Stored on the resulting duals

    Returns:
        UnrelatedRunResult with schedule, boundary-evaluated duals and ledger
    """
    dinst = ensure_discrete(instance)
    check_convex(dinst)
    delta = dinst.delta
    all_costs = [g for j in dinst.jobs for g in j.costs]
    lengths = [s * delta for j in dinst.jobs for s in j.slots]
    horizon = dinst.horizon * delta
    theta_binding = stretch_theta(all_costs, lengths, horizon=horizon) if lengths else 1.0
    theta_conservative = stretch_theta(all_costs, lengths, horizon=horizon, conservative=True) if lengths else 1.0
    theta_bound = theta if theta is not None else theta_binding
    k_bound = K if K is not None else curvature_K(all_costs)

    states = [MachineState(machine=i, delta=delta) for i in range(dinst.machines)]
    alpha: Dict[int, float] = {}
    beta: Dict[Tuple[int, int], float] = {}
    offsets: Dict[Tuple[int, int], float] = {}
    ledger: List[UnrelatedArrivalRecord] = []

    for job in sorted(dinst.jobs, key=lambda j: (j.release_slot, j.id)):
        r = job.release_slot
        states = [s.at(r) for s in states]
        for i in range(dinst.machines):
            offsets[(i, job.id)] = discrete_d(job.costs[i], r, job.slots[i], delta)

        decision = dispatch(job, states)
        i = decision.machine
        before = states[i]
        after = insert_job(before, job.id, job.slots[i], decision.t_star, job.costs[i])
        states[i] = after

        delta_alg = insertion_cost(before, after, job.id)
        shift_theta = early_shift_stretch(before, decision.slot, job.slots[i], horizon)
        increase = after.beta_hat_integral(r * delta) - before.beta_hat_integral(r * delta)
        alpha[job.id] = decision.alpha_n
        beta = {k: v for k, v in beta.items() if k[0] != i or k[1] < r}
        for slot, value in after.beta_hat_curve(r, after.end_slot).items():
            if value != 0.0:
                beta[(i, slot)] = value

        record = UnrelatedArrivalRecord(
            job=job.id,
            machine=i,
            t_star=decision.t_star,
            alpha_n=decision.alpha_n,
            delta_alg=delta_alg,
            beta_increase=increase,
            theta_bound=theta_bound,
            k_bound=k_bound,
            shift_theta=shift_theta
        )
        if not record.theta_ok or not record.k_ok:
            logger.warning(
                "arrival_audit_failed",
                job=job.id,
                machine=i,
                theta_audit=record.theta_audit,
                audit_theta=record.audit_theta,
                k_audit=record.k_audit
            )
        logger.debug("job_dispatched", job=job.id, machine=i, t_star=decision.t_star, alpha_n=decision.alpha_n)
        ledger.append(record)

    rows: List[Dict[int, int]] = [{} for _ in range(dinst.machines)]
    for state in states:
        for job_id, ivs in state.intervals.items():
            for a, b in ivs:
                for s in range(a, b):
                    rows[state.machine][s] = job_id
    logger.info("online_unrelated_run_completed", jobs=len(dinst.jobs), machines=dinst.machines)
    return UnrelatedRunResult(
        instance=dinst,
        schedule=Schedule.from_assignment(delta, rows),
        duals=DualSolution(
            delta=delta,
            alpha=alpha,
            beta=beta,
            epsilon=epsilon,
            convention=BOUNDARY,
            offsets=offsets
        ),
        ledger=tuple(ledger),
        machines=tuple(states),
        theta=theta_binding,
        theta_conservative=theta_conservative,
        K=k_bound
    )


# ========== LP LOWER BOUND ==========

def lp_lower_bound(instance: Union[AnyInstance, DiscreteInstance], speed: float = 1.0) -> float:
    """
    Optimal value of the slot-indexed relaxation with d offsets

    Work y_ijs of job j on machine i in slot s costs (g_ij(midpoint) + d_ij)
    per unit; each job needs sum y_ijs / v_ij >= 1 and every slot holds at
    most speed * delta work. Jobs may split across machines.

    Raises:
        InfeasibleNetworkError: The LP has no feasible point on the horizon
    """
    dinst = ensure_discrete(instance)
    if not dinst.jobs:
        return 0.0
    frac = integerize_speed(speed)
    delta = dinst.delta
    s_value = float(frac)
    work = sum(max(j.slots) for j in dinst.jobs)
    last_release = max(j.release_slot for j in dinst.jobs)
    horizon = last_release + int(math.ceil(work / s_value)) + 1

    columns: List[Tuple[int, int, int]] = []
    cost: List[float] = []
    for k, job in enumerate(dinst.jobs):
        for i in range(dinst.machines):
            g = job.costs[i]
            d = discrete_d(g, job.release_slot, job.slots[i], delta)
            slots = np.arange(job.release_slot, horizon)
            values = g.values((slots + 0.5) * delta) + d
            for s, c in zip(slots, values):
                columns.append((k, i, int(s)))
                cost.append(float(c))

    n_cols = len(columns)
    demand_rows, demand_cols, demand_vals = [], [], []
    cap_index: Dict[Tuple[int, int], int] = {}
    cap_rows, cap_cols = [], []
    for col, (k, i, s) in enumerate(columns):
        job = dinst.jobs[k]
        demand_rows.append(k)
        demand_cols.append(col)
        demand_vals.append(-1.0 / (job.slots[i] * delta))
        row = cap_index.setdefault((i, s), len(cap_index))
        cap_rows.append(row)
        cap_cols.append(col)

    n_jobs = len(dinst.jobs)
    demand = sparse.coo_matrix((demand_vals, (demand_rows, demand_cols)), shape=(n_jobs, n_cols))
    capacity = sparse.coo_matrix(
        (np.ones(len(cap_rows)), (cap_rows, cap_cols)),
        shape=(len(cap_index), n_cols)
    )
    a_ub = sparse.vstack([demand, capacity]).tocsr()
    b_ub = np.concatenate([-np.ones(n_jobs), np.full(len(cap_index), s_value * delta)])

    result = linprog(np.array(cost), A_ub=a_ub, b_ub=b_ub, bounds=(0, None), method="highs")
    if result.status != 0:
        logger.error("lp_lower_bound_failed", status=int(result.status), message=result.message)
        raise InfeasibleNetworkError(sum(j.slots[0] for j in dinst.jobs), 0)
    logger.debug("lp_lower_bound_solved", columns=n_cols, value=float(result.fun), speed=s_value)
    return float(result.fun)
