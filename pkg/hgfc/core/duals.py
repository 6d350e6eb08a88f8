"""
Dual solutions shared by the online runs and the verifier
"""
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Tuple

from hgfc.exceptions import ValidationError

MIDPOINT = "midpoint"
BOUNDARY = "boundary"

_NEGATIVE_SLACK = 1e-12


@dataclass(frozen=True)
class DualSolution:
    """
    alpha per job and beta per (machine, slot), beta in per-unit-time terms

    `convention` tells where g is evaluated inside a slot when checking
    alpha_j / v_ij <= beta_it + g_ij(t) + d_ij: the slot midpoint for the
    flow-based duals, the left slot boundary for the insertion-based ones.
    Slots missing from beta hold zero.
    """

    delta: float
    alpha: Mapping[int, float]
    beta: Mapping[Tuple[int, int], float]
    epsilon: float = 0.0
    convention: str = MIDPOINT
    offsets: Mapping[Tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "alpha", dict(self.alpha))
        object.__setattr__(self, "beta", dict(self.beta))
        object.__setattr__(self, "offsets", dict(self.offsets))
        if self.epsilon < 0:
            raise ValidationError("epsilon must be nonnegative", field="epsilon")
        if self.convention not in (MIDPOINT, BOUNDARY):
            raise ValidationError(f"Unknown evaluation convention {self.convention}", field="convention")
        for job, value in self.alpha.items():
            if value < -_NEGATIVE_SLACK:
                raise ValidationError(f"alpha of job {job} is negative ({value})", field="alpha")
        for key, value in self.beta.items():
            if value < -_NEGATIVE_SLACK:
                raise ValidationError(f"beta at {key} is negative ({value})", field="beta")

    def beta_at(self, machine: int, slot: int) -> float:
        return self.beta.get((machine, slot), 0.0)

    def offset(self, machine: int, job: int) -> float:
        """d_ij, zero for single-machine duals"""
        return self.offsets.get((machine, job), 0.0)

    @property
    def last_slot(self) -> int:
        return max((slot for _, slot in self.beta), default=-1)

    def beta_integral(self, machine: Optional[int] = None) -> float:
        return sum(
            value for (i, _), value in self.beta.items()
            if machine is None or i == machine
        ) * self.delta

    def objective(self, speed: float = 1.0) -> float:
        """sum alpha - speed * integral of beta"""
        return sum(self.alpha.values()) - speed * self.beta_integral()

    def with_epsilon(self, epsilon: float) -> "DualSolution":
        return replace(self, epsilon=epsilon)
