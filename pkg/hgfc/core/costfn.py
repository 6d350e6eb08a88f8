"""
Cost function families

Every cost is the scaled g(t) of a job (unscaled cost divided by its length),
parameterised in the local argument u = t - shift so that g(shift) = 0.
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.optimize import minimize_scalar

from hgfc.config import settings
from hgfc.exceptions import (
    NotDifferentiableError,
    UnboundedCurvatureError,
    UnboundedThetaError,
    ValidationError,
)

logger = structlog.get_logger()

_SHIFT_SLACK = 1e-12


class CostFunction(ABC):
    """Nonnegative nondecreasing cost with closed-form calculus"""

    family: str = "abstract"
    shift: float = 0.0

    # ========== LOCAL FORMS ==========

    @abstractmethod
    def _value(self, u):
        ...

    @abstractmethod
    def _derivative(self, u):
        ...

    @abstractmethod
    def _second_derivative(self, u):
        ...

    @abstractmethod
    def _antiderivative(self, u):
        """Integral of g from the shift to shift + u"""
        ...

    @property
    @abstractmethod
    def convex(self) -> bool:
        ...

    @abstractmethod
    def local_curvature(self) -> float:
        """sup over u >= 0 of u g''(u) / g'(u)"""
        ...

    # ========== PUBLIC API ==========

    def _local(self, t: float) -> float:
        u = t - self.shift
        if u < -_SHIFT_SLACK:
            raise ValidationError(
                f"{self.family} cost evaluated at t={t} before its shift {self.shift}",
                field="t"
            )
        return max(u, 0.0)

    def __call__(self, t: float) -> float:
        return float(self._value(self._local(t)))

    def derivative(self, t: float) -> float:
        return float(self._derivative(self._local(t)))

    def second_derivative(self, t: float) -> float:
        return float(self._second_derivative(self._local(t)))

    def integral(self, a: float, b: float) -> float:
        if b < a:
            raise ValidationError(f"Integral bounds reversed: [{a}, {b}]")
        if a == b:
            return 0.0
        return float(self._antiderivative(self._local(b)) - self._antiderivative(self._local(a)))

    def values(self, ts: np.ndarray) -> np.ndarray:
        """Vectorised g over times that are all >= shift"""
        return np.asarray(self._value(np.maximum(np.asarray(ts, dtype=float) - self.shift, 0.0)), dtype=float)

    def density_key(self) -> Optional[Tuple[tuple, float]]:
        """(core, density) when the cost is density times a shared core, else None"""
        return None

    def with_shift(self, shift: float) -> "CostFunction":
        return replace(self, shift=shift)  # type: ignore[type-var]


@dataclass(frozen=True)
class ScaledLinear(CostFunction):
    """g(u) = rho u"""

    rho: float
    shift: float = 0.0
    family = "linear"

    def __post_init__(self):
        if self.rho < 0:
            raise ValidationError("linear rho must be nonnegative", field="rho")

    def _value(self, u):
        return self.rho * u

    def _derivative(self, u):
        return self.rho + 0.0 * u

    def _second_derivative(self, u):
        return 0.0 * u

    def _antiderivative(self, u):
        return 0.5 * self.rho * u * u

    @property
    def convex(self) -> bool:
        return True

    def local_curvature(self) -> float:
        return 0.0

    def density_key(self):
        # shifting a linear cost only adds a constant per job
        return ("linear",), self.rho


@dataclass(frozen=True)
class ScaledPower(CostFunction):
    """g(u) = rho u^k, k >= 1"""

    rho: float
    k: float
    shift: float = 0.0
    family = "power"

    def __post_init__(self):
        if self.rho < 0:
            raise ValidationError("power rho must be nonnegative", field="rho")
        if self.k < 1:
            raise ValidationError("power exponent must be >= 1 to be differentiable at the shift", field="k")

    def _value(self, u):
        return self.rho * np.power(u, self.k)

    def _derivative(self, u):
        return self.rho * self.k * np.power(u, self.k - 1)

    def _second_derivative(self, u):
        if self.k == 1:
            return 0.0 * u
        with np.errstate(divide="ignore"):
            return self.rho * self.k * (self.k - 1) * np.power(u, self.k - 2)

    def _antiderivative(self, u):
        return self.rho * np.power(u, self.k + 1) / (self.k + 1)

    @property
    def convex(self) -> bool:
        return True

    def local_curvature(self) -> float:
        return self.k - 1.0

    def density_key(self):
        return ("power", self.k, self.shift), self.rho


@dataclass(frozen=True)
class Polynomial(CostFunction):
    """g(u) = sum_k a_k u^k for k = 1..d"""

    coeffs: Tuple[float, ...]
    shift: float = 0.0
    family = "poly"

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if any(c < 0 for c in self.coeffs):
            raise ValidationError("polynomial coefficients must be nonnegative", field="coeffs")

    @property
    def degree(self) -> int:
        nonzero = [k for k, c in enumerate(self.coeffs, start=1) if c > 0]
        return nonzero[-1] if nonzero else 0

    def _value(self, u):
        return sum(c * np.power(u, k) for k, c in enumerate(self.coeffs, start=1)) + 0.0 * u

    def _derivative(self, u):
        return sum(k * c * np.power(u, k - 1) for k, c in enumerate(self.coeffs, start=1)) + 0.0 * u

    def _second_derivative(self, u):
        return sum(
            k * (k - 1) * c * np.power(u, k - 2)
            for k, c in enumerate(self.coeffs, start=1) if k >= 2
        ) + 0.0 * u

    def _antiderivative(self, u):
        return sum(c * np.power(u, k + 1) / (k + 1) for k, c in enumerate(self.coeffs, start=1)) + 0.0 * u

    @property
    def convex(self) -> bool:
        return True

    def local_curvature(self) -> float:
        # weighted mean of (k - 1) that shifts to the top degree as u grows
        return float(max(self.degree - 1, 0))

    def density_key(self):
        if self.degree == 0:
            return None
        scale = next(c for c in self.coeffs if c > 0)
        core = tuple(round(c / scale, 12) for c in self.coeffs)
        return ("poly", core, self.shift), scale


@dataclass(frozen=True)
class ScaledLog(CostFunction):
    """g(u) = rho log(1 + u)"""

    rho: float
    shift: float = 0.0
    family = "log"

    def __post_init__(self):
        if self.rho < 0:
            raise ValidationError("log rho must be nonnegative", field="rho")

    def _value(self, u):
        return self.rho * np.log1p(u)

    def _derivative(self, u):
        return self.rho / (1.0 + u)

    def _second_derivative(self, u):
        return -self.rho / np.square(1.0 + u)

    def _antiderivative(self, u):
        return self.rho * ((1.0 + u) * np.log1p(u) - u)

    @property
    def convex(self) -> bool:
        return self.rho == 0

    def local_curvature(self) -> float:
        # -u/(1+u) peaks at u = 0
        return 0.0

    def density_key(self):
        return ("log", self.shift), self.rho


@dataclass(frozen=True)
class PiecewiseLinear(CostFunction):
    """
    Linear interpolation through breakpoints (u, y) in the local argument,
    starting at (0, 0) and continuing with the last slope
    """

    breakpoints: Tuple[Tuple[float, float], ...]
    shift: float = 0.0
    family = "pwl"

    def __post_init__(self):
        points = tuple((float(u), float(y)) for u, y in self.breakpoints)
        object.__setattr__(self, "breakpoints", points)
        if not points or points[0] != (0.0, 0.0):
            raise ValidationError("piecewise-linear cost must start at (0, 0)", field="breakpoints")
        us = [p[0] for p in points]
        ys = [p[1] for p in points]
        if any(b <= a for a, b in zip(us, us[1:])):
            raise ValidationError("breakpoints must be strictly increasing", field="breakpoints")
        if any(b < a for a, b in zip(ys, ys[1:])):
            raise ValidationError("piecewise-linear cost must be nondecreasing", field="breakpoints")

    @property
    def _us(self) -> np.ndarray:
        return np.array([p[0] for p in self.breakpoints])

    @property
    def _ys(self) -> np.ndarray:
        return np.array([p[1] for p in self.breakpoints])

    @property
    def slopes(self) -> np.ndarray:
        if len(self.breakpoints) < 2:
            return np.array([0.0])
        return np.diff(self._ys) / np.diff(self._us)

    def _segment(self, u):
        idx = np.searchsorted(self._us, u, side="right") - 1
        return np.clip(idx, 0, len(self.slopes) - 1)

    def _value(self, u):
        us, ys, slopes = self._us, self._ys, self.slopes
        inside = np.interp(u, us, ys)
        beyond = ys[-1] + slopes[-1] * (np.asarray(u) - us[-1])
        return np.where(np.asarray(u) > us[-1], beyond, inside)

    def _derivative(self, u):
        return self.slopes[self._segment(u)]

    def _second_derivative(self, u):
        interior = self._us[1:-1] if len(self.breakpoints) > 2 else np.array([])
        for b, left, right in zip(interior, self.slopes[:-1], self.slopes[1:]):
            if np.any(np.isclose(u, b)) and left != right:
                raise NotDifferentiableError(float(b) + self.shift)
        return 0.0 * np.asarray(u, dtype=float)

    def _antiderivative(self, u):
        us, ys, slopes = self._us, self._ys, self.slopes
        areas = np.concatenate([[0.0], np.cumsum(0.5 * (ys[1:] + ys[:-1]) * np.diff(us))])
        idx = self._segment(u)
        base_u = us[idx]
        base_y = ys[idx]
        du = np.asarray(u) - base_u
        return areas[idx] + base_y * du + 0.5 * slopes[idx] * du * du

    @property
    def convex(self) -> bool:
        return bool(np.all(np.diff(self.slopes) >= -1e-15))

    def local_curvature(self) -> float:
        # g'' vanishes off the breakpoints
        return 0.0


# ========== OPERATIONS ==========

def evaluate(g: CostFunction, t: float, order: int = 0) -> float:
    """
    Evaluate g, g' or g'' at t

    Args:
        g: Cost function
        t: Time, at least the cost's shift
        order: 0, 1 or 2

    Returns:
        The requested derivative
    """
    if order == 0:
        return g(t)
    if order == 1:
        return g.derivative(t)
    if order == 2:
        return g.second_derivative(t)
    raise ValidationError(f"Unsupported derivative order {order}", field="order")


def definite_integral(g: CostFunction, a: float, b: float) -> float:
    """Exact integral of g over [a, b]"""
    return g.integral(a, b)


def d_constant(g: CostFunction, r: float, v: float) -> float:
    """Average of the scaled cost over [r, r + v]"""
    if v <= 0:
        raise ValidationError("d constant needs a positive length", field="v")
    return g.integral(r, r + v) / v


def _geometric_grid(lo: float, hi: float) -> np.ndarray:
    decades = max(math.log10(hi / lo), 1.0)
    return np.geomspace(lo, hi, num=int(decades * settings.grid_points_per_decade) + 1)


def _refined_sup(ratio: Callable[[float], float], grid: np.ndarray) -> Tuple[float, bool]:
    """
    Grid sup of ratio with one bounded refinement around the best point

    Returns:
        (sup, reached_upper_edge)
    """
    values = np.array([ratio(float(x)) for x in grid])
    if not np.all(np.isfinite(values)):
        return math.inf, False
    best = int(np.argmax(values))
    sup = float(values[best])
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, len(grid) - 1)]
    if hi > lo:
        refined = minimize_scalar(lambda x: -ratio(float(x)), bounds=(lo, hi), method="bounded")
        if refined.success:
            sup = max(sup, float(-refined.fun))
    at_edge = best == len(grid) - 1 and len(values) > 1 and values[-1] > values[-2] + 1e-12
    return sup, at_edge


def _absolute_curvature(g: CostFunction, horizon: float) -> float:
    if g.shift <= 0:
        return g.local_curvature()

    def ratio(u: float) -> float:
        slope = float(g._derivative(u))
        if slope <= 0:
            return 0.0
        return (g.shift + u) * float(g._second_derivative(u)) / slope

    grid = _geometric_grid(10.0 ** -settings.grid_decades, max(horizon, 1.0))
    sup, _ = _refined_sup(ratio, grid)
    if sup > settings.curvature_divergence_bound:
        raise UnboundedCurvatureError(g.family, sup)
    return sup


def curvature_K(
    functions: Iterable[CostFunction],
    horizon: Optional[float] = None,
    absolute_time: bool = False
) -> float:
    """
    K = 1 + max over functions of sup t g''(t)/g'(t)

    The default takes the sup over the local argument u = t - shift. With
    absolute_time the ratio uses t itself, which diverges for shifted powers.
    """
    functions = list(functions)
    if not functions:
        return 1.0
    if absolute_time:
        probe = horizon if horizon is not None else 100.0
        sup = max(_absolute_curvature(g, probe) for g in functions)
    else:
        sup = max(g.local_curvature() for g in functions)
    return 1.0 + sup


def curvature_report(functions: Sequence[CostFunction], horizon: float) -> Dict[str, float]:
    """K over the local and the absolute argument; divergence shows as inf"""
    local = curvature_K(functions)
    try:
        absolute = curvature_K(functions, horizon=horizon, absolute_time=True)
    except UnboundedCurvatureError as e:
        logger.warning("curvature_unbounded", family=e.details.get("family"), horizon=horizon)
        absolute = math.inf
    return {"local": local, "absolute": absolute}


def _theta_single(g: CostFunction, v: float, horizon: float, lo: Optional[float] = None) -> Optional[float]:
    """sup over local u >= lo (default v) of the stretch ratio; None for a zero cost"""
    lo = v if lo is None else max(lo, 0.0)
    if isinstance(g, ScaledLinear):
        return 1.0 if g.rho > 0 else None
    if isinstance(g, ScaledPower):
        if g.rho == 0:
            return None
        if g.k == 1:
            return 1.0
        if lo == 0:
            return math.inf
        # decreasing in u
        return ((lo + v) ** g.k - lo ** g.k) / (g.k * v * lo ** (g.k - 1.0))
    if isinstance(g, ScaledLog):
        # secant below tangent, ratio tends to 1 from below
        return 1.0 if g.rho > 0 else None
    if isinstance(g, Polynomial) and g.degree <= 2:
        b = g.coeffs[0] if len(g.coeffs) >= 1 else 0.0
        a = g.coeffs[1] if len(g.coeffs) >= 2 else 0.0
        if a == 0 and b == 0:
            return None
        slope = 2.0 * a * lo + b
        return 1.0 + a * v / slope if slope > 0 else math.inf

    def ratio(u: float) -> float:
        slope = float(g._derivative(u))
        rise = float(g._value(u + v) - g._value(u))
        if slope <= 0:
            return math.inf if rise > 0 else 0.0
        return rise / (v * slope)

    if lo < v:
        head = ratio(lo)
        if not math.isfinite(head):
            return math.inf
        rest = _theta_single(g, v, horizon)
        grid = np.linspace(lo, v, settings.grid_points_per_decade + 1)
        early, _ = _refined_sup(ratio, grid)
        return max(early, rest if rest is not None else 0.0)
    grid = _geometric_grid(lo, max(horizon, 10.0 * lo))
    sup, at_edge = _refined_sup(ratio, grid)
    if not math.isfinite(sup) or at_edge:
        raise UnboundedThetaError(g.family, sup)
    return sup


def shift_stretch(g: CostFunction, v: float, start: float, horizon: Optional[float] = None) -> float:
    """
    sup over t >= start of (g(t + v) - g(t)) / (v g'(t))

    Bounds the cost of pushing a fragment of g that begins at start right by
    v. Infinite when g' vanishes there; 1 for a zero cost.
    """
    if v <= 0:
        raise ValidationError("stretch needs a positive length", field="v")
    u = max(start - g.shift, 0.0)
    value = _theta_single(g, v, horizon if horizon is not None else 100.0 * max(v, u), lo=u)
    return 1.0 if value is None else value


def stretch_theta(
    functions: Iterable[CostFunction],
    lengths: Sequence[float],
    horizon: Optional[float] = None,
    conservative: bool = False
) -> float:
    """
    theta = sup over (g, v, u >= v) of (g(u + v) - g(u)) / (v g'(u))

    Args:
        functions: Cost functions to scan
        lengths: Job lengths that bind v
        horizon: Upper end of the probe for grid-evaluated families
        conservative: Use only the minimum length

    Returns:
        The stretch constant, at least 1
    """
    if not lengths:
        raise ValidationError("stretch constant needs at least one length", field="lengths")
    vs = [min(lengths)] if conservative else sorted(set(float(v) for v in lengths))
    probe = horizon if horizon is not None else 100.0 * max(vs)
    theta = 1.0
    for g in functions:
        for v in vs:
            value = _theta_single(g, v, probe)
            if value is not None:
                theta = max(theta, value)
    return theta


def dominates(first: CostFunction, second: CostFunction, horizon: float, points: int = 512) -> bool:
    """True when first' >= second' on a dense grid of [start, horizon]"""
    start = max(first.shift, second.shift)
    grid = np.linspace(start, max(horizon, start + 1.0), points)
    return all(first.derivative(t) >= second.derivative(t) - 1e-12 for t in grid)


def shared_core_densities(functions: Sequence[CostFunction]) -> Optional[List[float]]:
    """Densities rho_j when every function is rho_j times one core, else None"""
    keys = [g.density_key() for g in functions]
    if any(k is None for k in keys):
        return None
    cores = {k[0] for k in keys}  # type: ignore[index]
    if len(cores) > 1:
        return None
    return [k[1] for k in keys]  # type: ignore[index]
