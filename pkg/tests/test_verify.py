"""Dual feasibility, benchmarks and competitive reports"""
import math

import pytest

from hgfc.core.costfn import ScaledLinear
from hgfc.core.duals import DualSolution
from hgfc.core.model import Instance, Job, Schedule, UnrelatedInstance, UnrelatedJob, discretize
from hgfc.core.single_machine import convert_duals, hdf_schedule, online_single_run, split_duals, split_instance
from hgfc.core.verify import (
    RunOutput,
    check_dual_feasibility,
    competitive_bound,
    competitive_report,
    dual_objective_slow,
    slow_speed,
    slower_benchmark,
)
from hgfc.exceptions import ValidationError


def test_competitive_bounds():
    assert competitive_bound("hdf", 0.0, 1.0) == 1.0
    assert competitive_bound("alg2", 1.0, 1.0) == pytest.approx(2.0)
    assert competitive_bound("alg2", 3.0, 2.0) == pytest.approx(2.0)
    assert math.isinf(competitive_bound("alg2", 0.5, 2.0))
    # speed 8 with K = theta = 2
    assert competitive_bound("alg3", 7.0, 2.0, theta=2.0) == pytest.approx(4.0)
    assert math.isinf(competitive_bound("hrdf", 1.0, 1.0))


def test_slow_speed():
    assert float(slow_speed(1.0)) == 0.5
    assert float(slow_speed(0.0)) == 1.0
    with pytest.raises(ValidationError):
        slow_speed(-0.1)


def test_dual_objective_slow():
    duals = DualSolution(delta=1.0, alpha={1: 4.0}, beta={(0, 0): 2.0}, epsilon=1.0)
    assert dual_objective_slow(duals) == pytest.approx(3.0)
    assert duals.objective() == pytest.approx(2.0)


def test_dual_solution_rejects_negative_values():
    with pytest.raises(ValidationError):
        DualSolution(delta=1.0, alpha={1: -1.0}, beta={})
    with pytest.raises(ValidationError):
        DualSolution(delta=1.0, alpha={}, beta={(0, 0): -1.0})


def test_infeasible_duals_are_reported():
    instance = Instance((Job(1, 0.0, 2.0, ScaledLinear(1.0)),))
    duals = DualSolution(delta=1.0, alpha={1: 100.0}, beta={})
    violations = check_dual_feasibility(duals, instance)
    assert violations
    assert all(v.slack < 0 for v in violations)
    assert violations[0].to_dict()["job"] == 1


# ========== BENCHMARKS ==========

def test_benchmarks_agree_at_unit_speed(example1):
    assert slower_benchmark(example1, 0.0) == pytest.approx(78.0)
    assert slower_benchmark(example1, 0.0, "brute") == pytest.approx(78.0)
    assert slower_benchmark(example1, 1.0) > 78.0


def test_benchmark_arguments(example1):
    with pytest.raises(ValidationError):
        slower_benchmark(example1, 0.0, "exact")
    with pytest.raises(ValidationError):
        slower_benchmark(example1, 1.0, "brute")
    job = UnrelatedJob(1, 0.0, (1.0, 1.0), (ScaledLinear(1.0), ScaledLinear(1.0)))
    with pytest.raises(ValidationError):
        slower_benchmark(UnrelatedInstance((job,), machines=2), 0.0, "oracle")


# ========== REPORTS ==========

def test_hdf_report_is_tight(example1):
    schedule = hdf_schedule(example1)
    converted = convert_duals(split_duals(split_instance(schedule, example1)))
    run = RunOutput(
        algorithm="hdf",
        instance=discretize(example1),
        schedule=schedule,
        duals=converted.to_dual_solution(example1.delta)
    )
    report = competitive_report(run, epsilon=0.0)
    assert report.alg_cost == pytest.approx(78.0)
    assert report.ratio == pytest.approx(1.0)
    assert report.dual_objective == pytest.approx(78.0)
    assert report.bound == 1.0
    assert report.invariants_ok
    assert report.to_dict()["benchmark_kind"] == "oracle"


def test_online_report_passes_with_speed(example1):
    result = online_single_run(example1, epsilon=1.0)
    run = RunOutput("alg2", result.instance, result.schedule, result.duals, result.ledger)
    report = competitive_report(run, epsilon=1.0)
    assert report.K == 1.0
    assert report.bound == pytest.approx(2.0)
    assert report.ratio <= 1.0 + 1e-9
    assert report.passed
    assert report.ledger_summary["arrivals"] == 5
    assert report.ledger_summary["lemma_violations"] == 0


def test_empty_instance_report():
    run = RunOutput("hdf", discretize(Instance(())), Schedule.empty(1.0))
    report = competitive_report(run, epsilon=0.0)
    assert report.alg_cost == 0.0
    assert report.benchmark_cost == 0.0
    assert report.ratio == 1.0
    assert report.passed
