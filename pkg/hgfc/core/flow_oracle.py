"""
Discretized offline optimum and LP duals via min-cost bipartite flow

Network layout: source -> job (supply) -> slot (g(midpoint) * delta / q per
unit) -> sink (capacity p), where the speed is p/q. One sentinel slot past
the last needed slot carries no flow in any optimum and pins the duals of
post-makespan slots to zero.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cmp_to_key, lru_cache
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import structlog

from hgfc.config import settings
from hgfc.core.costfn import CostFunction, dominates
from hgfc.core.model import DiscreteInstance, RemainingState, Schedule
from hgfc.core.residual_graph import INFINITY, ResidualGraph
from hgfc.exceptions import (
    InfeasibleNetworkError,
    NonIntegralCapacityError,
    NonOptimalInputError,
    TooLargeError,
    ValidationError,
)

logger = structlog.get_logger()

SOURCE = 0
SINK = 1

NodeLabel = Tuple[str, int]
SpeedLike = Union[int, float, Fraction]


def integerize_speed(speed: SpeedLike) -> Fraction:
    """
    Write a speed as p/q with q <= max_speed_denominator

    Raises:
        NonIntegralCapacityError: No such fraction matches the speed
    """
    if isinstance(speed, Fraction):
        frac = speed
    else:
        if speed <= 0 or not math.isfinite(speed):
            raise ValidationError(f"Speed must be positive, got {speed}", field="speed")
        frac = Fraction(speed).limit_denominator(settings.max_speed_denominator)
        if abs(float(frac) - float(speed)) > 1e-12 * max(1.0, float(speed)):
            raise NonIntegralCapacityError(float(speed), settings.max_speed_denominator)
    if frac <= 0:
        raise ValidationError(f"Speed must be positive, got {speed}", field="speed")
    if frac.denominator > settings.max_speed_denominator:
        raise NonIntegralCapacityError(float(frac), settings.max_speed_denominator)
    return frac


# ========== NETWORK ==========

@dataclass(frozen=True)
class FlowNetwork:
    """Job-slot bipartite network starting at slot `start`"""

    start: int
    horizon: int
    delta: float
    speed: Fraction
    jobs: Tuple[int, ...]
    releases: Tuple[int, ...]
    residual_slots: Tuple[int, ...]
    costs: Tuple[CostFunction, ...]

    @property
    def slot_capacity(self) -> int:
        return self.speed.numerator

    @property
    def units_per_slot(self) -> int:
        """Flow units per slot of work"""
        return self.speed.denominator

    @property
    def slots(self) -> range:
        return range(self.start, self.horizon)

    @property
    def sentinel(self) -> int:
        return self.horizon - 1

    def supply(self, k: int) -> int:
        return self.residual_slots[k] * self.units_per_slot

    @property
    def total_supply(self) -> int:
        return sum(self.supply(k) for k in range(len(self.jobs)))

    @property
    def total_capacity(self) -> int:
        return self.slot_capacity * len(self.slots)

    def index_of(self, job_id: int) -> int:
        return self.jobs.index(job_id)

    def slot_cost(self, k: int, slot: int) -> float:
        """Cost of one full slot of job k's work at slot"""
        return self.costs[k]((slot + 0.5) * self.delta) * self.delta

    def unit_cost(self, k: int, slot: int) -> float:
        return self.slot_cost(k, slot) / self.units_per_slot

    def job_node(self, k: int) -> int:
        return 2 + k

    def slot_node(self, slot: int) -> int:
        return 2 + len(self.jobs) + (slot - self.start)

    def label(self, node: int) -> Optional[NodeLabel]:
        if node in (SOURCE, SINK):
            return None
        if node < 2 + len(self.jobs):
            return ("job", self.jobs[node - 2])
        return ("slot", self.start + node - 2 - len(self.jobs))

    def dump_edges(self) -> str:
        """Plain edge list, one `j t cost cap` line per job-slot edge"""
        lines = []
        for k, job_id in enumerate(self.jobs):
            for slot in range(max(self.releases[k], self.start), self.horizon):
                lines.append(f"{job_id} {slot} {self.unit_cost(k, slot)!r} {self.slot_capacity}")
        return "\n".join(lines)


def _needed_slots(total_units: int, capacity: int) -> int:
    return -(-total_units // capacity)


def build_rnf(
    state: RemainingState,
    instance: DiscreteInstance,
    speed: SpeedLike = 1,
    machine: int = 0
) -> FlowNetwork:
    """
    Residual network at the state's clock; every alive job is released there

    Args:
        state: Clock and residual slots of the alive jobs
        instance: Slot-indexed instance providing the costs
        speed: Machine speed, rational with a bounded denominator
        machine: Machine whose costs are used

    Returns:
        FlowNetwork with horizon t_1 + 1, where t_1 ends the last needed slot
    """
    frac = integerize_speed(speed)
    alive = state.alive
    residual = tuple(state.residuals[j] for j in alive)
    units = sum(residual) * frac.denominator
    t_1 = state.clock + _needed_slots(units, frac.numerator)
    return FlowNetwork(
        start=state.clock,
        horizon=t_1 + 1,
        delta=instance.delta,
        speed=frac,
        jobs=tuple(alive),
        releases=tuple(state.clock for _ in alive),
        residual_slots=residual,
        costs=tuple(instance.job(j).costs[machine] for j in alive)
    )


def build_offline(instance: DiscreteInstance, speed: SpeedLike = 1, machine: int = 0) -> FlowNetwork:
    """Whole-instance network with per-job release slots"""
    frac = integerize_speed(speed)
    jobs = sorted(instance.jobs, key=lambda j: j.id)
    start = min((j.release_slot for j in jobs), default=0)
    last_release = max((j.release_slot for j in jobs), default=0)
    units = sum(j.slots[machine] for j in jobs) * frac.denominator
    horizon = last_release + _needed_slots(units, frac.numerator) + 1
    return FlowNetwork(
        start=start,
        horizon=horizon,
        delta=instance.delta,
        speed=frac,
        jobs=tuple(j.id for j in jobs),
        releases=tuple(j.release_slot for j in jobs),
        residual_slots=tuple(j.slots[machine] for j in jobs),
        costs=tuple(j.costs[machine] for j in jobs)
    )


# ========== SOLUTIONS ==========

@dataclass(frozen=True)
class AugmentingPath:
    """Alternating job/slot path of one augmentation"""

    nodes: Tuple[NodeLabel, ...]
    units: int
    unit_cost: float

    @property
    def cost(self) -> float:
        return self.units * self.unit_cost


@dataclass(frozen=True)
class FlowSolution:
    network: FlowNetwork
    value: float
    flows: Tuple[Tuple[int, int, int], ...]
    paths: Tuple[AugmentingPath, ...] = ()
    residual: Optional[ResidualGraph] = field(default=None, compare=False, repr=False)

    @property
    def assignment(self) -> Dict[int, int]:
        """slot -> job for unit-speed networks"""
        if self.network.speed != 1:
            raise ValidationError("Slot assignment is defined for unit speed only", field="speed")
        return {slot: job for job, slot, _ in self.flows}

    def slots_of(self, job_id: int) -> List[int]:
        return sorted(slot for job, slot, _ in self.flows if job == job_id)

    def completion_slot(self, job_id: int) -> int:
        slots = self.slots_of(job_id)
        return slots[-1] + 1 if slots else self.network.start

    def completion_slots(self) -> Dict[int, int]:
        return {job: self.completion_slot(job) for job in self.network.jobs}

    @property
    def makespan(self) -> int:
        return max((slot + 1 for _, slot, _ in self.flows), default=self.network.start)

    def to_schedule(self, machine: int = 0, machines: int = 1) -> Schedule:
        rows: List[Dict[int, int]] = [{} for _ in range(machines)]
        rows[machine] = self.assignment
        return Schedule.from_assignment(self.network.delta, rows)


def _load(network: FlowNetwork) -> Tuple[ResidualGraph, Dict[Tuple[int, int], int]]:
    graph = ResidualGraph()
    for _ in range(2 + len(network.jobs) + len(network.slots)):
        graph.add_vertex()
    job_edges: Dict[Tuple[int, int], int] = {}
    unbounded = max(network.total_supply, 1)
    for k in range(len(network.jobs)):
        graph.add_edge(SOURCE, network.job_node(k), cap=network.supply(k), cost=0.0)
    for k in range(len(network.jobs)):
        for slot in range(max(network.releases[k], network.start), network.horizon):
            job_edges[(k, slot)] = graph.add_edge(
                network.job_node(k),
                network.slot_node(slot),
                cap=unbounded,
                cost=network.unit_cost(k, slot)
            )
    for slot in network.slots:
        graph.add_edge(network.slot_node(slot), SINK, cap=network.slot_capacity, cost=0.0)
    return graph, job_edges


def _seed(
    network: FlowNetwork,
    graph: ResidualGraph,
    job_edges: Mapping[Tuple[int, int], int],
    seed_flows: Sequence[Tuple[int, int, int]]
) -> int:
    seeded = 0
    for job_id, slot, units in seed_flows:
        if units <= 0:
            continue
        k = network.index_of(job_id)
        edge = job_edges.get((k, slot))
        if edge is None:
            raise ValidationError(f"Seed flow for job {job_id} at slot {slot} has no edge", field="seed_flows")
        source_edge = graph.adj[SOURCE][k]
        sink_edge = next(e for e in graph.adj[network.slot_node(slot)] if graph.edges[e].dst == SINK)
        if graph.edges[source_edge].residual < units or graph.edges[sink_edge].residual < units:
            raise ValidationError(f"Seed flow for job {job_id} at slot {slot} exceeds capacity", field="seed_flows")
        graph.push(source_edge, units)
        graph.push(edge, units)
        graph.push(sink_edge, units)
        seeded += units
    return seeded


def solve_min_cost(
    network: FlowNetwork,
    seed_flows: Optional[Sequence[Tuple[int, int, int]]] = None
) -> FlowSolution:
    """
    Integral min-cost flow by successive shortest paths

    Args:
        network: Network to solve
        seed_flows: Optional (job, slot, units) flow that is optimal for the
            network without the unsaturated supply; augmentation then
            continues from it along alternating paths

    Returns:
        FlowSolution; its paths hold every augmentation performed

    Raises:
        InfeasibleNetworkError: Some supply cannot be routed
    """
    if settings.log_level.upper() == "DEBUG":
        logger.debug("flow_network_dump", edges=network.dump_edges())

    graph, job_edges = _load(network)
    seeded = _seed(network, graph, job_edges, seed_flows or ())
    demand = network.total_supply - seeded
    augmentations = graph.successive_shortest_paths(SOURCE, SINK, demand, warm=seeded > 0)
    routed = seeded + sum(units for _, units, _ in augmentations)
    if routed < network.total_supply:
        raise InfeasibleNetworkError(network.total_supply, routed)

    flows = []
    value = 0.0
    for (k, slot), e in sorted(job_edges.items(), key=lambda item: (item[0][1], item[0][0])):
        units = graph.edges[e].flow
        if units > 0:
            flows.append((network.jobs[k], slot, units))
            value += units * network.unit_cost(k, slot)

    paths = []
    for edge_path, units, unit_cost in augmentations:
        labels = []
        for e in edge_path:
            lab = network.label(graph.edges[e].dst)
            if lab is not None:
                labels.append(lab)
        paths.append(AugmentingPath(nodes=tuple(labels), units=units, unit_cost=unit_cost))

    logger.debug(
        "min_cost_flow_solved",
        jobs=len(network.jobs),
        slots=len(network.slots),
        value=value,
        augmentations=len(paths),
        warm=seeded > 0
    )
    return FlowSolution(
        network=network,
        value=value,
        flows=tuple(flows),
        paths=tuple(paths),
        residual=graph
    )


# ========== DUALS ==========

@dataclass(frozen=True)
class DualPotentials:
    """
    Duals in time units: alpha per job, beta per slot (per unit time)

    Feasibility reads alpha_j / v_j <= beta_t + g_j(midpoint of t) for every
    slot t at or after the job's release; slots missing from beta hold 0.
    """

    network: FlowNetwork = field(compare=False, repr=False)
    alpha: Mapping[int, float]
    beta: Mapping[int, float]

    def beta_at(self, slot: int) -> float:
        return self.beta.get(slot, 0.0)

    def residual_length(self, job_id: int) -> float:
        return self.network.residual_slots[self.network.index_of(job_id)] * self.network.delta

    def alpha_rate(self, job_id: int) -> float:
        """alpha_j / v_j(r_n)"""
        return self.alpha[job_id] / self.residual_length(job_id)

    def objective(self) -> float:
        speed = float(self.network.speed)
        return sum(self.alpha.values()) - speed * sum(self.beta.values()) * self.network.delta

    def violations(self, tolerance: Optional[float] = None) -> List[Tuple[int, int, float]]:
        """(job, slot, slack) for every constraint with slack below -tolerance"""
        tol = settings.feasibility_tolerance if tolerance is None else tolerance
        found = []
        for k, job_id in enumerate(self.network.jobs):
            rate = self.alpha_rate(job_id)
            for slot in range(max(self.network.releases[k], self.network.start), self.network.horizon):
                mid = (slot + 0.5) * self.network.delta
                slack = self.beta_at(slot) + self.network.costs[k](mid) - rate
                if slack < -tol:
                    found.append((job_id, slot, slack))
        return found


def _from_potentials(network: FlowNetwork, potentials: Sequence[float]) -> DualPotentials:
    q = network.units_per_slot
    alpha = {}
    for k, job_id in enumerate(network.jobs):
        a = potentials[network.job_node(k)]
        if a == INFINITY:
            raise InfeasibleNetworkError(network.supply(k), 0)
        alpha[job_id] = network.supply(k) * a
    beta = {}
    for slot in network.slots:
        b = max(potentials[network.slot_node(slot)], 0.0)
        beta[slot] = b * q / network.delta
    return DualPotentials(network=network, alpha=alpha, beta=beta)


def _residual_of(network: FlowNetwork, solution: FlowSolution) -> ResidualGraph:
    if solution.residual is not None:
        return solution.residual
    graph, job_edges = _load(network)
    _seed(network, graph, job_edges, solution.flows)
    return graph


def extract_duals(network: FlowNetwork, solution: FlowSolution) -> DualPotentials:
    """
    Duals from shortest residual-path distances to the sink

    These are the pointwise-largest optimal duals: every optimal dual is a
    feasible residual potential and is bounded above by these distances.
    """
    graph = _residual_of(network, solution)
    return _from_potentials(network, graph.distances_to(SINK))


def maximal_beta(
    network: FlowNetwork,
    optimum_value: float,
    solution: FlowSolution,
    seed: Optional[DualPotentials] = None
) -> DualPotentials:
    """
    Optimal duals with the largest beta on every slot

    Args:
        network: Solved network
        optimum_value: Value returned by solve_min_cost
        solution: The optimal flow
        seed: Optimal duals to raise, defaults to extract_duals

    Returns:
        Raised duals with unchanged objective

    Raises:
        NonOptimalInputError: The seed does not close the duality gap
    """
    seed = seed if seed is not None else extract_duals(network, solution)
    dual = seed.objective()
    if abs(optimum_value - dual) > settings.duality_tolerance * (1.0 + abs(optimum_value)):
        raise NonOptimalInputError(optimum_value, dual)

    graph = _residual_of(network, solution)
    potential = [INFINITY] * graph.size
    potential[SINK] = 0.0
    passes = 0
    # Gauss-Seidel relaxation of p(u) = min over residual arcs (c + p(v))
    while True:
        passes += 1
        change = 0.0
        for u in range(graph.size):
            if u == SINK:
                continue
            best = potential[u]
            for e in graph.adj[u]:
                edge = graph.edges[e]
                if edge.residual > 0 and potential[edge.dst] < INFINITY:
                    best = min(best, edge.cost + potential[edge.dst])
            if best < potential[u]:
                step = potential[u] - best
                change = max(change, step if potential[u] < INFINITY else math.inf)
                potential[u] = best
        if change < settings.raise_tolerance or passes > graph.size + 1:
            break

    raised = _from_potentials(network, potential)
    below = [s for s in network.slots if raised.beta_at(s) < seed.beta_at(s) - settings.feasibility_tolerance]
    if below:
        logger.warning("maximal_beta_below_seed", slots=below[:10], count=len(below))
    logger.debug(
        "maximal_beta_raised",
        passes=passes,
        beta_increase=(sum(raised.beta.values()) - sum(seed.beta.values())) * network.delta
    )
    return raised


# ========== INDEPENDENT ORACLES ==========

def brute_force_opt(instance: DiscreteInstance, machine: int = 0) -> float:
    """
    Exhaustive minimum fractional cost on one machine

    Slots are filled left to right with any released unfinished job; a slot
    idles only when no job is available, which loses nothing for
    nondecreasing costs.

    Raises:
        TooLargeError: Total slots exceed brute_force_max_slots
    """
    total = instance.total_slots(machine)
    cap = settings.brute_force_max_slots
    if total > cap:
        raise TooLargeError(total, cap)
    if not instance.jobs:
        return 0.0
    jobs = sorted(instance.jobs, key=lambda j: j.id)
    releases = tuple(j.release_slot for j in jobs)
    costs = [
        [instance.slot_cost(j.id, s, machine) for s in range(instance.horizon + 1)]
        for j in jobs
    ]

    @lru_cache(maxsize=None)
    def best(slot: int, remaining: Tuple[int, ...]) -> float:
        if not any(remaining):
            return 0.0
        ready = [k for k, left in enumerate(remaining) if left > 0 and releases[k] <= slot]
        if not ready:
            return best(slot + 1, remaining)
        result = INFINITY
        for k in ready:
            nxt = list(remaining)
            nxt[k] -= 1
            result = min(result, costs[k][slot] + best(slot + 1, tuple(nxt)))
        return result

    return best(0, tuple(j.slots[machine] for j in jobs))


def dominance_order(costs: Mapping[int, CostFunction], horizon: float) -> List[int]:
    """
    Job ids sorted so each cost's derivative dominates the next ones

    Raises:
        ValidationError: Two costs cross, so the family is not dominating
    """
    def compare(a: int, b: int) -> int:
        ab = dominates(costs[a], costs[b], horizon)
        ba = dominates(costs[b], costs[a], horizon)
        if ab and ba:
            return a - b
        if ab:
            return -1
        if ba:
            return 1
        raise ValidationError(f"Costs of jobs {a} and {b} are not ordered by dominance", field="costs")

    return sorted(costs, key=cmp_to_key(compare))


# ========== VALUE FUNCTION ==========

def value_function(
    instance: DiscreteInstance,
    residuals: Mapping[int, int],
    start_slot: int,
    machine: int = 0
) -> float:
    """Discretized optimal cost-to-go V(v, t) for residual slots v from start_slot"""
    state = RemainingState(clock=start_slot, residuals=residuals, delta=instance.delta)
    if not state.alive:
        return 0.0
    return solve_min_cost(build_rnf(state, instance, machine=machine)).value


def time_sensitivity(
    instance: DiscreteInstance,
    residuals: Mapping[int, int],
    slot: int,
    machine: int = 0
) -> float:
    """(V(v, t + delta) - V(v, t)) / delta"""
    later = value_function(instance, residuals, slot + 1, machine)
    now = value_function(instance, residuals, slot, machine)
    return (later - now) / instance.delta


def state_sensitivity(
    instance: DiscreteInstance,
    residuals: Mapping[int, int],
    slot: int,
    job_id: int,
    machine: int = 0
) -> float:
    """(V(v + delta e_j, t) - V(v, t)) / delta"""
    bumped = dict(residuals)
    bumped[job_id] = bumped.get(job_id, 0) + 1
    more = value_function(instance, bumped, slot, machine)
    now = value_function(instance, residuals, slot, machine)
    return (more - now) / instance.delta


@dataclass(frozen=True)
class HJBRecord:
    slot: int
    job: int
    beta: float
    time_difference: float
    alpha_rate: float
    state_difference: float

    @property
    def beta_error(self) -> float:
        return abs(self.beta - self.time_difference)

    @property
    def alpha_error(self) -> float:
        return abs(self.alpha_rate - self.state_difference)


def hjb_check(instance: DiscreteInstance, machine: int = 0) -> List[HJBRecord]:
    """
    Compare maximal duals with finite differences of V along the optimal trajectory

    Requires identical releases; one record per busy slot.
    """
    releases = {j.release_slot for j in instance.jobs}
    if len(releases) > 1:
        raise ValidationError("HJB check needs identical releases", field="jobs")
    if not instance.jobs:
        return []
    start = releases.pop()
    residuals = {j.id: j.slots[machine] for j in instance.jobs}
    state = RemainingState(clock=start, residuals=residuals, delta=instance.delta)
    network = build_rnf(state, instance, machine=machine)
    solution = solve_min_cost(network)
    duals = maximal_beta(network, solution.value, solution)

    records = []
    remaining = dict(residuals)
    assignment = solution.assignment
    for slot in range(start, solution.makespan):
        job = assignment.get(slot)
        if job is None:
            continue
        records.append(HJBRecord(
            slot=slot,
            job=job,
            beta=duals.beta_at(slot),
            time_difference=time_sensitivity(instance, remaining, slot, machine),
            alpha_rate=duals.alpha_rate(job),
            state_difference=state_sensitivity(instance, remaining, slot, job, machine)
        ))
        remaining[job] -= 1
    return records
