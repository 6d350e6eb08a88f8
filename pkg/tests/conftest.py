"""Pytest configuration and fixtures"""
import numpy as np
import pytest

from hgfc.core.costfn import ScaledLinear, ScaledPower
from hgfc.core.model import Instance, Job, UnrelatedInstance, UnrelatedJob
from hgfc.logging_config import configure_logging


@pytest.fixture(autouse=True)
def quiet_logging():
    """Only warnings and errors reach the captured output

    Per test, since the CLI rebinds the log stream to whatever stderr is current.
    """
    configure_logging("WARNING", "console")


@pytest.fixture
def example1():
    """Five linear jobs whose HDF schedule splits jobs 1 and 3"""
    lengths = {1: 3.0, 2: 1.0, 3: 2.0, 4: 1.0, 5: 1.0}
    jobs = [
        Job(id=j, release=float(j - 1), length=lengths[j], cost=ScaledLinear(rho=float(j)))
        for j in range(1, 6)
    ]
    return Instance(tuple(jobs), delta=1.0, name="example1")


@pytest.fixture
def two_jobs():
    """v = (1, 2), rho = (2, 1), both released at zero"""
    return lambda delta: Instance(
        (
            Job(id=1, release=0.0, length=1.0, cost=ScaledLinear(rho=2.0)),
            Job(id=2, release=0.0, length=2.0, cost=ScaledLinear(rho=1.0)),
        ),
        delta=delta,
        name="two-jobs"
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def random_linear():
    """Factory for small single-machine linear instances"""
    def build(rng, n=4, max_length=3, max_release=4):
        jobs = []
        for j in range(1, n + 1):
            jobs.append(Job(
                id=j,
                release=float(rng.integers(0, max_release + 1)),
                length=float(rng.integers(1, max_length + 1)),
                cost=ScaledLinear(rho=float(rng.integers(1, 6)))
            ))
        return Instance(tuple(jobs), delta=1.0)
    return build


@pytest.fixture
def random_unrelated():
    """Factory for small unrelated-machine quadratic-power instances"""
    def build(rng, n=5, machines=2, k=2.0):
        jobs = []
        for j in range(1, n + 1):
            release = float(rng.integers(0, 5))
            jobs.append(UnrelatedJob(
                id=j,
                release=release,
                lengths=tuple(float(v) for v in rng.integers(1, 4, size=machines)),
                costs=tuple(ScaledPower(rho=float(rng.uniform(1, 3)), k=k) for _ in range(machines))
            ))
        return UnrelatedInstance(tuple(jobs), machines=machines)
    return build
