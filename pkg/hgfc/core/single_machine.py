"""
Single machine: HDF, split-instance duals and their conversion, online flow-based scheduling
"""
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from hgfc.config import settings
from hgfc.core.costfn import CostFunction, shared_core_densities
from hgfc.core.duals import MIDPOINT, DualSolution
from hgfc.core.flow_oracle import FlowSolution, build_rnf, maximal_beta, solve_min_cost
from hgfc.core.model import (
    AnyInstance,
    DiscreteInstance,
    DiscreteJob,
    Interval,
    RemainingState,
    Schedule,
    ensure_discrete,
    merge_slots,
)
from hgfc.exceptions import NegativeHeightError, ValidationError

logger = structlog.get_logger()

PlanIntervals = Mapping[int, Sequence[Interval]]


# ========== HDF ==========

def _densities(instance: DiscreteInstance, densities: Optional[Mapping[int, float]]) -> Dict[int, float]:
    if densities is not None:
        return dict(densities)
    jobs = sorted(instance.jobs, key=lambda j: j.id)
    rhos = shared_core_densities([j.costs[0] for j in jobs])
    if rhos is None:
        raise ValidationError("HDF needs costs rho_j * g sharing one core g", field="costs")
    return {j.id: rho for j, rho in zip(jobs, rhos)}


def hdf_schedule(
    instance: Union[AnyInstance, DiscreteInstance],
    densities: Optional[Mapping[int, float]] = None
) -> Schedule:
    """
    Highest density first, slot by slot

    Args:
        instance: Single-machine instance with costs rho_j * g
        densities: Explicit rho_j; derived from the costs when omitted

    Returns:
        Schedule where each slot runs the released unfinished job of largest
        density, ties to the lowest id
    """
    dinst = ensure_discrete(instance)
    rho = _densities(dinst, densities)
    remaining = {j.id: j.slots[0] for j in dinst.jobs}
    releases = {j.id: j.release_slot for j in dinst.jobs}
    assignment: Dict[int, int] = {}
    slot = 0
    while any(remaining.values()):
        ready = [j for j, left in remaining.items() if left > 0 and releases[j] <= slot]
        if ready:
            job = max(ready, key=lambda j: (rho[j], -j))
            assignment[slot] = job
            remaining[job] -= 1
        slot += 1
    return Schedule.from_assignment(dinst.delta, [assignment])


# ========== SPLIT INSTANCE ==========

@dataclass(frozen=True)
class Subjob:
    index: int
    parent: int
    start: float
    length: float
    cost: CostFunction
    block: int
    density: Optional[float] = None

    @property
    def end(self) -> float:
        return self.start + self.length

    def variation(self) -> float:
        return self.cost(self.end) - self.cost(self.start)


@dataclass(frozen=True)
class SplitInstance:
    """Maximal processing runs of a schedule, in time order"""

    subjobs: Tuple[Subjob, ...]

    def of_parent(self, job_id: int) -> List[Subjob]:
        return [s for s in self.subjobs if s.parent == job_id]

    def lengths_by_parent(self) -> Dict[int, float]:
        totals: Dict[int, float] = {}
        for s in self.subjobs:
            totals[s.parent] = totals.get(s.parent, 0.0) + s.length
        return totals

    def block(self, index: int) -> List[Subjob]:
        return [s for s in self.subjobs if s.block == index]

    @property
    def blocks(self) -> int:
        return max((s.block for s in self.subjobs), default=-1) + 1


def split_instance(
    schedule: Schedule,
    instance: Union[AnyInstance, DiscreteInstance],
    densities: Optional[Mapping[int, float]] = None
) -> SplitInstance:
    """One subjob per maximal contiguous run; idle gaps start a new block"""
    dinst = ensure_discrete(instance, schedule.delta)
    costs = {j.id: j.costs[0] for j in dinst.jobs}
    if densities is None:
        jobs = sorted(dinst.jobs, key=lambda j: j.id)
        rhos = shared_core_densities([costs[j.id] for j in jobs])
        densities = {j.id: r for j, r in zip(jobs, rhos)} if rhos is not None else {}

    subjobs = []
    block = -1
    previous_end: Optional[float] = None
    for job, start, end in schedule.timeline(0):
        if previous_end is None or start > previous_end + 1e-12:
            block += 1
        subjobs.append(Subjob(
            index=len(subjobs),
            parent=job,
            start=start,
            length=end - start,
            cost=costs[job],
            block=block,
            density=densities.get(job)
        ))
        previous_end = end
    return SplitInstance(subjobs=tuple(subjobs))


# ========== ALPHA / BETA PLOTS ==========

@dataclass(frozen=True)
class AlphaBetaPlots:
    """
    Step heights per subjob and the beta curve of the split duals

    beta on subjob k's run is g_k(end_k) - g_k(t) + tail_k, less every
    lowering (from, to, amount) whose range covers t; zero off the runs.
    """

    split: SplitInstance
    tails: Tuple[float, ...]
    heights: Tuple[float, ...]
    decreases: Tuple[float, ...]
    lowerings: Tuple[Tuple[float, float, float], ...] = ()
    reference_heights: Mapping[int, float] = field(default_factory=dict)

    @property
    def original_heights(self) -> Tuple[float, ...]:
        return tuple(s.cost(s.end) + tail for s, tail in zip(self.split.subjobs, self.tails))

    def _lowered(self, k: int) -> float:
        s = self.split.subjobs[k]
        mid = s.start + s.length / 2.0
        return sum(amount for lo, hi, amount in self.lowerings if lo <= mid < hi)

    def beta_on(self, k: int, t: float) -> float:
        """beta on the closure of subjob k's run"""
        s = self.split.subjobs[k]
        return s.cost(s.end) - s.cost(t) + self.tails[k] - self._lowered(k)

    def beta(self, t: float) -> float:
        for k, s in enumerate(self.split.subjobs):
            if s.start <= t < s.end:
                return self.beta_on(k, t)
        return 0.0

    def beta_integral(self) -> float:
        total = 0.0
        for k, s in enumerate(self.split.subjobs):
            area = s.length * s.cost(s.end) - s.cost.integral(s.start, s.end)
            total += area + s.length * (self.tails[k] - self._lowered(k))
        return total

    def subjob_alphas(self) -> List[float]:
        return [h * s.length for h, s in zip(self.heights, self.split.subjobs)]

    def alpha(self) -> Dict[int, float]:
        """alpha per parent job, the sum of its steps"""
        totals: Dict[int, float] = {}
        for value, s in zip(self.subjob_alphas(), self.split.subjobs):
            totals[s.parent] = totals.get(s.parent, 0.0) + value
        return totals

    def objective(self) -> float:
        return sum(self.subjob_alphas()) - self.beta_integral()

    def violations(self, releases: Mapping[int, float], samples: int = 9) -> List[Tuple[int, float, float]]:
        """
        (job, t, slack) where alpha_j / v_j > beta_t + g_j(t) on a sampled grid

        Samples each run including its left limit at the end, the gaps and
        one unit past the makespan. A left limit at t only binds jobs
        released strictly before t.
        """
        lengths = self.split.lengths_by_parent()
        alpha = self.alpha()
        costs = {s.parent: s.cost for s in self.split.subjobs}
        points: List[Tuple[float, float, bool]] = []
        for k, s in enumerate(self.split.subjobs):
            for t in np.linspace(s.start, s.end, samples):
                t = float(t)
                points.append((t, self.beta_on(k, t), t >= s.end))
        ends = [s.end for s in self.split.subjobs]
        for t in ends + [max(ends, default=0.0) + 1.0]:
            points.append((t, self.beta(t), False))

        found = []
        for job, total in alpha.items():
            rate = total / lengths[job]
            for t, beta, left_limit in points:
                if t < releases[job] - 1e-12:
                    continue
                if left_limit and t <= releases[job] + 1e-12:
                    continue
                slack = beta + costs[job](t) - rate
                if slack < -settings.feasibility_tolerance:
                    found.append((job, t, slack))
        return found

    def to_dual_solution(self, delta: float, epsilon: float = 0.0) -> DualSolution:
        """Sample beta at slot midpoints"""
        horizon = max((s.end for s in self.split.subjobs), default=0.0)
        beta = {}
        for slot in range(int(round(horizon / delta))):
            value = self.beta((slot + 0.5) * delta)
            if value != 0.0:
                beta[(0, slot)] = max(value, 0.0)
        return DualSolution(delta=delta, alpha=self.alpha(), beta=beta, epsilon=epsilon, convention=MIDPOINT)


def split_duals(split: SplitInstance) -> AlphaBetaPlots:
    """Duals of the split instance; the tail sums stay within each busy block"""
    tails = [0.0] * len(split.subjobs)
    for b in range(split.blocks):
        running = 0.0
        for s in reversed(split.block(b)):
            tails[s.index] = running
            running += s.variation()
    return AlphaBetaPlots(
        split=split,
        tails=tuple(tails),
        heights=tuple(s.cost(s.end) + tail for s, tail in zip(split.subjobs, tails)),
        decreases=tuple(0.0 for _ in split.subjobs)
    )


def convert_duals(plots: AlphaBetaPlots) -> AlphaBetaPlots:
    """
    Lower steps right to left until every job's steps share one height

    The first step met for a job sets its reference height to the least
    value of beta_t + g_j(t) at or after the step start; later steps of the
    job drop to it. Each drop also lowers every step to its left and beta
    from the block start to the dropped step's end.

    Raises:
        NegativeHeightError: A step or the beta curve goes below zero, or a
            step would have to rise
    """
    subjobs = plots.split.subjobs
    heights = list(plots.heights)
    decreases = [0.0] * len(subjobs)
    lowerings: List[Tuple[float, float, float]] = list(plots.lowerings)
    reference: Dict[int, float] = dict(plots.reference_heights)
    tol = settings.feasibility_tolerance

    def current(k: int, t: float) -> float:
        s = subjobs[k]
        mid = s.start + s.length / 2.0
        lowered = sum(amount for lo, hi, amount in lowerings if lo <= mid < hi)
        return s.cost(s.end) - s.cost(t) + plots.tails[k] - lowered

    for b in range(plots.split.blocks):
        block = plots.split.block(b)
        block_start = block[0].start
        block_end = block[-1].end
        for pos in range(len(block) - 1, -1, -1):
            s = block[pos]
            job = s.parent
            if job in reference:
                target = reference[job]
            else:
                # g is rho_j times a shared core, so each run's candidate is monotone
                candidates = [heights[s.index], s.cost(block_end)]
                for later in block[pos + 1:]:
                    for t in (later.start, later.end):
                        candidates.append(current(later.index, t) + s.cost(t))
                target = min(candidates)
                reference[job] = target
            drop = heights[s.index] - target
            if drop < -tol:
                raise NegativeHeightError(s.index, drop)
            if drop > 0.0:
                for earlier in block[:pos + 1]:
                    heights[earlier.index] -= drop
                lowerings.append((block_start, s.end, drop))
                decreases[s.index] = drop
            if heights[s.index] < -tol:
                raise NegativeHeightError(s.index, heights[s.index])
            logger.debug("step_converted", subjob=s.index, job=job, height=heights[s.index], drop=drop)

        for s in block:
            floor = current(s.index, s.end)
            if floor < -tol:
                raise NegativeHeightError(s.index, floor)

    return AlphaBetaPlots(
        split=plots.split,
        tails=plots.tails,
        heights=tuple(heights),
        decreases=tuple(decreases),
        lowerings=tuple(lowerings),
        reference_heights=reference
    )


# ========== BETA-HAT ==========

def beta_hat_single(plan_intervals: PlanIntervals, costs: Mapping[int, CostFunction], t: float) -> float:
    """Total variation of each job's cost over its planned intervals from t on"""
    total = 0.0
    for job, intervals in plan_intervals.items():
        g = costs[job]
        for a, b in intervals:
            if b > t:
                total += g(b) - g(max(t, a))
    return total


def beta_hat_integral(plan_intervals: PlanIntervals, costs: Mapping[int, CostFunction], r: float) -> float:
    """Exact integral of beta_hat_single over [r, inf) for intervals starting at or after r"""
    total = 0.0
    for job, intervals in plan_intervals.items():
        g = costs[job]
        for a, b in intervals:
            a = max(a, r)
            if b <= a:
                continue
            total += (a - r) * (g(b) - g(a)) + (b - a) * g(b) - g.integral(a, b)
    return total


# ========== ONLINE ==========

@dataclass(frozen=True)
class SingleArrivalRecord:
    job: int
    r: float
    delta_alg: float
    alpha_new: float
    beta_tail_increase: float
    postponement_ok: bool
    advanced_jobs: Tuple[int, ...]
    path_count: int
    path_cost: float
    delta_d: float

    @property
    def lemma_ok(self) -> bool:
        """delta_alg <= alpha_new"""
        return self.delta_alg <= self.alpha_new + settings.duality_tolerance * (1.0 + abs(self.alpha_new))

    @property
    def k_ratio(self) -> Optional[float]:
        if self.delta_alg <= 0:
            return None
        return self.beta_tail_increase / self.delta_alg

    def to_dict(self) -> Dict:
        return {
            "job": self.job,
            "r": self.r,
            "delta_alg": self.delta_alg,
            "alpha_new": self.alpha_new,
            "beta_tail_increase": self.beta_tail_increase,
            "postponement_ok": self.postponement_ok,
            "advanced_jobs": list(self.advanced_jobs),
            "path_count": self.path_count,
            "path_cost": self.path_cost,
            "delta_d": self.delta_d,
            "lemma_ok": self.lemma_ok,
        }


@dataclass(frozen=True)
class EnvelopeSnapshot:
    """beta-hat on the slot grid just before and after one arrival"""

    job: int
    r: float
    times: Tuple[float, ...]
    before: Tuple[float, ...]
    after: Tuple[float, ...]


@dataclass(frozen=True)
class OnlineRunResult:
    instance: DiscreteInstance
    schedule: Schedule
    duals: DualSolution
    ledger: Tuple
    envelopes: Tuple[EnvelopeSnapshot, ...] = ()


def _plan_intervals(flows: Sequence[Tuple[int, int, int]], delta: float) -> Dict[int, List[Interval]]:
    slots: Dict[int, List[int]] = {}
    for job, slot, _ in flows:
        slots.setdefault(job, []).append(slot)
    return {job: [(a * delta, b * delta) for a, b in merge_slots(s)] for job, s in slots.items()}


class OnlineState:
    """
    Running state of the online flow-based algorithm

    Slots before the clock are committed and never rewritten; the plan is
    the optimal flow of the residual network at the latest arrival.
    """

    def __init__(self, instance: DiscreteInstance, warm: Optional[bool] = None, epsilon: float = 0.0):
        if instance.machines != 1:
            raise ValidationError("Online flow scheduling runs on one machine", field="machines")
        self.instance = instance
        self.warm = settings.warm_start if warm is None else warm
        self.epsilon = epsilon
        self.costs = {j.id: j.costs[0] for j in instance.jobs}
        self.clock = 0
        self.committed: Dict[int, int] = {}
        self.residuals: Dict[int, int] = {}
        self.plan: Optional[FlowSolution] = None
        self.alpha: Dict[int, float] = {}
        self.beta: Dict[int, float] = {}
        self.ledger: List[SingleArrivalRecord] = []
        self.envelopes: List[EnvelopeSnapshot] = []

    def advance(self, slot: int) -> None:
        """Commit planned slots up to slot"""
        if self.plan is not None:
            assignment = self.plan.assignment
            for s in range(self.clock, slot):
                job = assignment.get(s)
                if job is not None:
                    self.committed[s] = job
                    self.residuals[job] -= 1
        self.clock = max(self.clock, slot)

    def _plan_tail(self) -> List[Tuple[int, int, int]]:
        if self.plan is None:
            return []
        return [f for f in self.plan.flows if f[1] >= self.clock]

    def _envelope(self, intervals: PlanIntervals, until: int) -> Tuple[float, ...]:
        delta = self.instance.delta
        return tuple(
            beta_hat_single(intervals, self.costs, s * delta)
            for s in range(self.clock, until + 1)
        )

    def arrive(self, job: DiscreteJob) -> SingleArrivalRecord:
        """Re-plan from the job's release with the job added"""
        self.advance(job.release_slot)
        delta = self.instance.delta
        r = self.clock
        old_tail = self._plan_tail()
        old_value = sum(self.instance.slot_cost(j, s) for j, s, _ in old_tail)
        old_intervals = _plan_intervals(old_tail, delta)
        old_completion: Dict[int, int] = {}
        for j, s, _ in old_tail:
            old_completion[j] = max(old_completion.get(j, 0), s + 1)

        self.residuals[job.id] = job.slots[0]
        state = RemainingState(clock=r, residuals=self.residuals, delta=delta)
        network = build_rnf(state, self.instance)
        seed = old_tail if (self.warm and old_tail) else None
        solution = solve_min_cost(network, seed_flows=seed)
        delta_alg = solution.value - old_value

        duals = maximal_beta(network, solution.value, solution)
        alpha_new = duals.alpha[job.id]
        self.alpha[job.id] = alpha_new
        self.beta = {s: b for s, b in self.beta.items() if s < r}
        self.beta.update({s: b for s, b in duals.beta.items() if b != 0.0})

        new_intervals = _plan_intervals(solution.flows, delta)
        before = beta_hat_integral(old_intervals, self.costs, r * delta)
        after = beta_hat_integral(new_intervals, self.costs, r * delta)
        increase = after - before
        new_completion = solution.completion_slots()
        advanced = tuple(sorted(j for j, c in old_completion.items() if new_completion.get(j, c) < c))

        until = max(solution.makespan, r)
        self.envelopes.append(EnvelopeSnapshot(
            job=job.id,
            r=r * delta,
            times=tuple(s * delta for s in range(r, until + 1)),
            before=self._envelope(old_intervals, until),
            after=self._envelope(new_intervals, until)
        ))

        record = SingleArrivalRecord(
            job=job.id,
            r=r * delta,
            delta_alg=delta_alg,
            alpha_new=alpha_new,
            beta_tail_increase=increase,
            postponement_ok=not advanced,
            advanced_jobs=advanced,
            path_count=len(solution.paths) if seed else 0,
            path_cost=sum(p.cost for p in solution.paths) if seed else delta_alg,
            delta_d=alpha_new - increase / (1.0 + self.epsilon)
        )
        if not record.lemma_ok:
            logger.warning("arrival_bound_violated", job=job.id, delta_alg=delta_alg, alpha_new=alpha_new)
        if advanced:
            logger.info("postponement_violated", job=job.id, advanced=list(advanced))
        logger.debug(
            "arrival_processed",
            job=job.id,
            r=r * delta,
            delta_alg=delta_alg,
            alpha_new=alpha_new,
            beta_tail_increase=increase
        )
        self.plan = solution
        self.ledger.append(record)
        return record

    def finish(self) -> None:
        if self.plan is not None:
            self.advance(self.plan.makespan)

    def schedule(self) -> Schedule:
        return Schedule.from_assignment(self.instance.delta, [self.committed])

    def duals(self) -> DualSolution:
        return DualSolution(
            delta=self.instance.delta,
            alpha=self.alpha,
            beta={(0, s): b for s, b in self.beta.items()},
            epsilon=self.epsilon,
            convention=MIDPOINT
        )


def online_single_run(
    instance: Union[AnyInstance, DiscreteInstance],
    warm: Optional[bool] = None,
    epsilon: float = 0.0
) -> OnlineRunResult:
    """
    Online flow-based scheduling on one machine

    Args:
        instance: Arrival stream; jobs are processed by (release, id)
        warm: Continue the previous optimal flow along alternating paths
            instead of re-solving; defaults to settings.warm_start
        epsilon: Speed augmentation used for the slow dual increment

    Returns:
        OnlineRunResult with the committed schedule, the final duals and one
        ledger record per arrival
    """
    dinst = ensure_discrete(instance)
    state = OnlineState(dinst, warm=warm, epsilon=epsilon)
    for job in sorted(dinst.jobs, key=lambda j: (j.release_slot, j.id)):
        state.arrive(job)
    state.finish()
    logger.info(
        "online_single_run_completed",
        jobs=len(dinst.jobs),
        warm=state.warm,
        postponement_violations=sum(1 for rec in state.ledger if not rec.postponement_ok)
    )
    return OnlineRunResult(
        instance=dinst,
        schedule=state.schedule(),
        duals=state.duals(),
        ledger=tuple(state.ledger),
        envelopes=tuple(state.envelopes)
    )
