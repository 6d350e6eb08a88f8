"""
Seeded instance generator
"""
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import structlog

from hgfc.exceptions import BadConfigError
from hgfc.models.schemas import ExperimentConfig, FamilySpec

logger = structlog.get_logger()


def instance_id(config: ExperimentConfig, trial: int) -> str:
    return f"{config.name}-s{config.seed}-t{trial}"


def _check_range(name: str, bounds: Tuple[float, float]) -> None:
    lo, hi = bounds
    if lo > hi:
        raise BadConfigError(f"{name} is empty: [{lo}, {hi}]", field=name)


def _validate(config: ExperimentConfig) -> None:
    family = config.family
    _check_range("length_range", config.length_range)
    _check_range("density_range", family.density_range)
    _check_range("coeff_range", family.coeff_range)
    _check_range("slope_range", family.slope_range)
    if config.length_range[0] < 1:
        raise BadConfigError("lengths must be at least one time unit", field="length_range")
    if family.density_range[0] < 0 or family.coeff_range[0] < 0 or family.slope_range[0] < 0:
        raise BadConfigError("cost parameters must be nonnegative", field="family")
    ratio = config.time_unit / config.delta
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise BadConfigError(
            f"time_unit {config.time_unit} is not a multiple of delta {config.delta}",
            field="time_unit"
        )


def _draw_cost(rng: np.random.Generator, family: FamilySpec, max_length: float) -> Dict[str, Any]:
    """One cost spec; polynomials draw coefficients, the rest a density"""
    rho = float(rng.uniform(*family.density_range))
    name = family.name
    if name in ("linear", "log"):
        return {"family": name, "rho": rho}
    if name == "power":
        return {"family": "power", "rho": rho, "k": family.k}
    if name == "poly":
        coeffs = [float(c) for c in rng.uniform(*family.coeff_range, size=family.degree)]
        return {"family": "poly", "coeffs": coeffs}
    if name == "quadratic":
        # b may be near zero, so pushes close to the release can stretch past theta
        b = rho * max_length * float(rng.uniform(0.0, 2.0))
        return {"family": "poly", "coeffs": [b, rho]}
    slopes = np.sort(rng.uniform(*family.slope_range, size=family.pwl_pieces)) * rho
    points: List[List[float]] = [[0.0, 0.0]]
    for i, slope in enumerate(slopes, start=1):
        u = i * max_length
        points.append([u, points[-1][1] + float(slope) * max_length])
    return {"family": "pwl", "breakpoints": points}


def _releases(rng: np.random.Generator, n: int, rate: float) -> np.ndarray:
    """Integer arrival times of a Poisson stream, the first at zero"""
    if n == 0:
        return np.zeros(0, dtype=int)
    gaps = rng.exponential(1.0 / rate, size=n)
    gaps[0] = 0.0
    return np.floor(np.cumsum(gaps)).astype(int)


def gen_instance(config: ExperimentConfig, trial: int = 0) -> Dict[str, Any]:
    """
    Deterministic instance for (config.seed, trial)

    Args:
        config: Experiment configuration
        trial: Trial index mixed into the seed

    Returns:
        Instance file data; an explicit job list in the config passes through

    Raises:
        BadConfigError: A parameter range is empty or the time unit does not
            fit the slot width
    """
    ident = instance_id(config, trial)
    meta = {"name": ident, "family": config.family.name, "seed": config.seed, "trial": trial}

    if config.jobs is not None:
        machines = config.n_machines
        for job in config.jobs:
            if len(job.lengths) != machines:
                raise BadConfigError(
                    f"job {job.id} has {len(job.lengths)} lengths for {machines} machines",
                    field="jobs"
                )
        data = {
            "delta": config.delta,
            "machines": machines,
            "jobs": [job.model_dump(exclude_none=True) for job in config.jobs],
        }
        data.update(meta)
        data["family"] = "explicit"
        return data

    _validate(config)
    rng = np.random.default_rng([config.seed, trial])
    family = config.family
    unit = config.time_unit
    lo, hi = config.length_range
    max_length = hi * unit

    releases = _releases(rng, config.n_jobs, config.arrival_rate)
    jobs = []
    for j in range(config.n_jobs):
        release = float(releases[j]) * unit
        lengths = [float(v) * unit for v in rng.integers(lo, hi + 1, size=config.n_machines)]
        costs = [_draw_cost(rng, family, max_length) for _ in range(config.n_machines)]
        if family.shift_to_release:
            for c in costs:
                c["shift"] = release
        jobs.append({"id": j + 1, "release": release, "lengths": lengths, "costs": costs})

    data = {"delta": config.delta, "machines": config.n_machines, "jobs": jobs}
    data.update(meta)
    logger.debug("instance_generated", instance_id=ident, jobs=len(jobs), family=family.name)
    return data


def gen_instances(config: ExperimentConfig, trials: Optional[int] = None) -> List[Dict[str, Any]]:
    count = config.trials if trials is None else trials
    return [gen_instance(config, t) for t in range(count)]

