"""
Instances, discretization, schedules and cost accounting
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import structlog

from hgfc.config import settings
from hgfc.core.costfn import CostFunction
from hgfc.exceptions import (
    IncompleteScheduleError,
    InfeasibleScheduleError,
    NonCommensurateError,
    ValidationError,
)

logger = structlog.get_logger()

Interval = Tuple[float, float]
SlotInterval = Tuple[int, int]


# ========== INSTANCES ==========

@dataclass(frozen=True)
class Job:
    """Single-machine job with scaled cost g_j"""

    id: int
    release: float
    length: float
    cost: CostFunction

    def __post_init__(self):
        if self.length <= 0:
            raise ValidationError(f"Job {self.id} length must be positive", field="length")
        if self.release < 0:
            raise ValidationError(f"Job {self.id} release must be nonnegative", field="release")
        if self.cost.shift > self.release + 1e-12:
            raise ValidationError(
                f"Job {self.id} cost starts at {self.cost.shift}, after release {self.release}",
                field="cost"
            )


@dataclass(frozen=True)
class UnrelatedJob:
    """Job with one length and one scaled cost per machine"""

    id: int
    release: float
    lengths: Tuple[float, ...]
    costs: Tuple[CostFunction, ...]

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        object.__setattr__(self, "costs", tuple(self.costs))
        if len(self.lengths) != len(self.costs) or not self.lengths:
            raise ValidationError(f"Job {self.id} needs one length and one cost per machine")
        if self.release < 0:
            raise ValidationError(f"Job {self.id} release must be nonnegative", field="release")
        for v, g in zip(self.lengths, self.costs):
            if v <= 0:
                raise ValidationError(f"Job {self.id} lengths must be positive", field="lengths")
            if g.shift > self.release + 1e-12:
                raise ValidationError(f"Job {self.id} cost starts after its release", field="costs")

    def on(self, machine: int) -> Job:
        return Job(self.id, self.release, self.lengths[machine], self.costs[machine])


@dataclass(frozen=True)
class Instance:
    """Single-machine instance"""

    jobs: Tuple[Job, ...]
    delta: float = 1.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "jobs", tuple(self.jobs))
        ids = [j.id for j in self.jobs]
        if len(set(ids)) != len(ids):
            raise ValidationError("Job ids must be unique", field="jobs")
        if self.delta <= 0:
            raise ValidationError("delta must be positive", field="delta")

    @property
    def machines(self) -> int:
        return 1

    @cached_property
    def by_id(self) -> Dict[int, Job]:
        return {j.id: j for j in self.jobs}

    def job(self, job_id: int) -> Job:
        return self.by_id[job_id]

    def as_unrelated(self) -> "UnrelatedInstance":
        return UnrelatedInstance(
            jobs=tuple(UnrelatedJob(j.id, j.release, (j.length,), (j.cost,)) for j in self.jobs),
            machines=1,
            delta=self.delta,
            name=self.name
        )


@dataclass(frozen=True)
class UnrelatedInstance:
    """Instance on m unrelated machines"""

    jobs: Tuple[UnrelatedJob, ...]
    machines: int
    delta: float = 1.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "jobs", tuple(self.jobs))
        if self.machines < 1:
            raise ValidationError("At least one machine is required", field="machines")
        ids = [j.id for j in self.jobs]
        if len(set(ids)) != len(ids):
            raise ValidationError("Job ids must be unique", field="jobs")
        for j in self.jobs:
            if len(j.lengths) != self.machines:
                raise ValidationError(f"Job {j.id} has {len(j.lengths)} lengths for {self.machines} machines")

    @cached_property
    def by_id(self) -> Dict[int, UnrelatedJob]:
        return {j.id: j for j in self.jobs}

    def job(self, job_id: int) -> UnrelatedJob:
        return self.by_id[job_id]

    def single(self) -> Instance:
        if self.machines != 1:
            raise ValidationError("Only one-machine instances have a single-machine view")
        return Instance(tuple(j.on(0) for j in self.jobs), self.delta, self.name)


AnyInstance = Union[Instance, UnrelatedInstance]


# ========== DISCRETIZATION ==========

@dataclass(frozen=True)
class Discretization:
    delta: float
    horizon: int

    def time(self, slot: float) -> float:
        return slot * self.delta

    def midpoint(self, slot: int) -> float:
        return (slot + 0.5) * self.delta


@dataclass(frozen=True)
class DiscreteJob:
    id: int
    release_slot: int
    slots: Tuple[int, ...]
    costs: Tuple[CostFunction, ...]

    def length(self, machine: int, delta: float) -> float:
        return self.slots[machine] * delta


@dataclass(frozen=True)
class DiscreteInstance:
    """Slot-indexed instance; slot t costs g(midpoint) * delta"""

    jobs: Tuple[DiscreteJob, ...]
    machines: int
    discretization: Discretization
    name: str = ""

    @property
    def delta(self) -> float:
        return self.discretization.delta

    @property
    def horizon(self) -> int:
        return self.discretization.horizon

    @cached_property
    def by_id(self) -> Dict[int, DiscreteJob]:
        return {j.id: j for j in self.jobs}

    def job(self, job_id: int) -> DiscreteJob:
        return self.by_id[job_id]

    def slot_cost(self, job_id: int, slot: int, machine: int = 0) -> float:
        return self.job(job_id).costs[machine](self.discretization.midpoint(slot)) * self.delta

    def total_slots(self, machine: int = 0) -> int:
        return sum(j.slots[machine] for j in self.jobs)


def _as_slots(value: float, delta: float, job_id: int, name: str) -> int:
    ratio = value / delta
    slots = round(ratio)
    if abs(ratio - slots) > settings.commensurate_tolerance * max(1.0, abs(ratio)):
        raise NonCommensurateError(job_id, name, value, delta)
    return int(slots)


def discretize(instance: AnyInstance, delta: Optional[float] = None) -> DiscreteInstance:
    """
    Slot-index an instance

    Args:
        instance: Single-machine or unrelated instance
        delta: Slot width, defaults to the instance's own

    Returns:
        DiscreteInstance with horizon (max release + sum of lengths) / delta
    """
    delta = delta if delta is not None else instance.delta
    if delta <= 0:
        raise ValidationError("delta must be positive", field="delta")
    unrelated = instance.as_unrelated() if isinstance(instance, Instance) else instance

    jobs = []
    for j in unrelated.jobs:
        jobs.append(DiscreteJob(
            id=j.id,
            release_slot=_as_slots(j.release, delta, j.id, "release"),
            slots=tuple(_as_slots(v, delta, j.id, "length") for v in j.lengths),
            costs=j.costs
        ))
    horizon = max((dj.release_slot for dj in jobs), default=0) + sum(max(dj.slots) for dj in jobs)
    return DiscreteInstance(
        jobs=tuple(jobs),
        machines=unrelated.machines,
        discretization=Discretization(delta=delta, horizon=horizon),
        name=unrelated.name
    )


def ensure_discrete(instance: Union[AnyInstance, DiscreteInstance], delta: Optional[float] = None) -> DiscreteInstance:
    if isinstance(instance, DiscreteInstance):
        return instance
    return discretize(instance, delta)


# ========== SCHEDULES ==========

def merge_slots(slots: Sequence[int]) -> List[SlotInterval]:
    """Maximal runs of consecutive slots as half-open [start, end)"""
    runs: List[SlotInterval] = []
    for s in sorted(slots):
        if runs and runs[-1][1] == s:
            runs[-1] = (runs[-1][0], s + 1)
        else:
            runs.append((s, s + 1))
    return runs


@dataclass(frozen=True)
class Schedule:
    """Per-machine slot assignment; slot index -> job id or None"""

    delta: float
    machines: Tuple[Tuple[Optional[int], ...], ...]

    @classmethod
    def from_assignment(
        cls,
        delta: float,
        assignment: Sequence[Mapping[int, int]],
    ) -> "Schedule":
        """Build from one {slot: job} mapping per machine"""
        rows = []
        for mapping in assignment:
            length = max(mapping.keys(), default=-1) + 1
            rows.append(tuple(mapping.get(s) for s in range(length)))
        return cls(delta=delta, machines=tuple(rows))

    @classmethod
    def empty(cls, delta: float, machines: int = 1) -> "Schedule":
        return cls(delta=delta, machines=tuple(() for _ in range(machines)))

    @cached_property
    def _slots(self) -> Dict[int, Dict[int, List[int]]]:
        table: Dict[int, Dict[int, List[int]]] = {}
        for i, row in enumerate(self.machines):
            for s, job in enumerate(row):
                if job is not None:
                    table.setdefault(job, {}).setdefault(i, []).append(s)
        return table

    @property
    def job_ids(self) -> List[int]:
        return sorted(self._slots)

    def machine_of(self, job_id: int) -> int:
        machines = self._slots.get(job_id, {})
        if len(machines) != 1:
            raise InfeasibleScheduleError(f"Job {job_id} runs on {len(machines)} machines", job_id)
        return next(iter(machines))

    def slots_of(self, job_id: int) -> List[int]:
        return sorted(s for slots in self._slots.get(job_id, {}).values() for s in slots)

    def slot_intervals(self, job_id: int) -> List[SlotInterval]:
        return merge_slots(self.slots_of(job_id))

    def intervals(self, job_id: int) -> List[Interval]:
        """I_j as a union of half-open real intervals"""
        return [(a * self.delta, b * self.delta) for a, b in self.slot_intervals(job_id)]

    def completion_slot(self, job_id: int) -> int:
        slots = self.slots_of(job_id)
        if not slots:
            raise IncompleteScheduleError(job_id, 0)
        return slots[-1] + 1

    def completion_time(self, job_id: int) -> float:
        return self.completion_slot(job_id) * self.delta

    def timeline(self, machine: int = 0) -> List[Tuple[int, float, float]]:
        """(job, start, end) runs in time order on one machine"""
        runs: List[Tuple[int, float, float]] = []
        row = self.machines[machine] if machine < len(self.machines) else ()
        for s, job in enumerate(row):
            if job is None:
                continue
            if runs and runs[-1][0] == job and runs[-1][2] == s * self.delta:
                runs[-1] = (job, runs[-1][1], (s + 1) * self.delta)
            else:
                runs.append((job, s * self.delta, (s + 1) * self.delta))
        return runs


@dataclass(frozen=True)
class RemainingState:
    """Residual slots of alive jobs at a slot-indexed clock"""

    clock: int
    residuals: Mapping[int, int] = field(default_factory=dict)
    delta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "residuals", dict(self.residuals))
        if any(v < 0 for v in self.residuals.values()):
            raise ValidationError("Residuals must be nonnegative", field="residuals")

    @property
    def time(self) -> float:
        return self.clock * self.delta

    @property
    def residual_lengths(self) -> Dict[int, float]:
        return {j: v * self.delta for j, v in self.residuals.items()}

    @property
    def alive(self) -> List[int]:
        return sorted(j for j, v in self.residuals.items() if v > 0)


# ========== COST ACCOUNTING ==========

def _check_feasible(schedule: Schedule, instance: DiscreteInstance, require_complete: bool) -> None:
    known = instance.by_id
    for job_id in schedule.job_ids:
        if job_id not in known:
            raise InfeasibleScheduleError(f"Schedule holds unknown job {job_id}", job_id)
        machine = schedule.machine_of(job_id)
        if machine >= instance.machines:
            raise InfeasibleScheduleError(f"Job {job_id} placed on missing machine {machine}", job_id)
        job = known[job_id]
        slots = schedule.slots_of(job_id)
        if slots[0] < job.release_slot:
            raise InfeasibleScheduleError(f"Job {job_id} runs before its release", job_id)
        expected = job.slots[machine]
        if len(slots) > expected:
            raise InfeasibleScheduleError(f"Job {job_id} holds {len(slots)} slots, needs {expected}", job_id)
        if len(slots) < expected:
            if require_complete:
                raise IncompleteScheduleError(job_id, expected - len(slots))
            raise InfeasibleScheduleError(f"Job {job_id} holds {len(slots)} slots, needs {expected}", job_id)
    for job in instance.jobs:
        if job.id not in schedule._slots:
            if require_complete:
                raise IncompleteScheduleError(job.id, min(job.slots))
            raise InfeasibleScheduleError(f"Job {job.id} is never scheduled", job.id)


def fractional_cost(schedule: Schedule, instance: Union[AnyInstance, DiscreteInstance]) -> float:
    """
    Midpoint Riemann sum of the fractional objective

    Args:
        schedule: Feasible schedule
        instance: Instance the schedule serves

    Returns:
        Sum over scheduled slots of g_ij(slot midpoint) * delta
    """
    dinst = ensure_discrete(instance, schedule.delta)
    _check_feasible(schedule, dinst, require_complete=False)
    total = 0.0
    for job_id in schedule.job_ids:
        machine = schedule.machine_of(job_id)
        for s in schedule.slots_of(job_id):
            total += dinst.slot_cost(job_id, s, machine)
    return total


def integral_cost(schedule: Schedule, instance: Union[AnyInstance, DiscreteInstance]) -> float:
    """Sum of v_ij * g_ij(C_j), the unscaled completion cost"""
    dinst = ensure_discrete(instance, schedule.delta)
    _check_feasible(schedule, dinst, require_complete=True)
    total = 0.0
    for job in dinst.jobs:
        machine = schedule.machine_of(job.id)
        length = job.length(machine, dinst.delta)
        total += length * job.costs[machine](schedule.completion_time(job.id))
    return total
