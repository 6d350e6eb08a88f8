"""HDF dual conversion and the online flow-based algorithm"""
import pytest

from hgfc.core.costfn import Polynomial, ScaledLinear, ScaledLog, ScaledPower
from hgfc.core.flow_oracle import build_offline, solve_min_cost
from hgfc.core.model import (
    Instance,
    Job,
    UnrelatedInstance,
    UnrelatedJob,
    discretize,
    fractional_cost,
)
from hgfc.core.single_machine import (
    OnlineState,
    beta_hat_integral,
    beta_hat_single,
    convert_duals,
    hdf_schedule,
    online_single_run,
    split_duals,
    split_instance,
)
from hgfc.core.verify import RunOutput, check_dual_feasibility, competitive_report
from hgfc.exceptions import ValidationError


@pytest.fixture
def example1_plots(example1):
    schedule = hdf_schedule(example1)
    split = split_instance(schedule, example1)
    return schedule, split_duals(split)


# ========== HDF ==========

def test_hdf_schedule(example1):
    schedule = hdf_schedule(example1)
    assert schedule.machines[0] == (1, 2, 3, 4, 5, 3, 1, 1)
    assert fractional_cost(schedule, example1) == pytest.approx(78.0)


def test_hdf_needs_shared_core():
    instance = Instance((
        Job(1, 0.0, 1.0, ScaledPower(1.0, 2.0)),
        Job(2, 0.0, 1.0, ScaledPower(1.0, 3.0)),
    ))
    with pytest.raises(ValidationError):
        hdf_schedule(instance)
    schedule = hdf_schedule(instance, densities={1: 1.0, 2: 2.0})
    assert schedule.machines[0] == (2, 1)


def test_split_instance(example1_plots):
    _, plots = example1_plots
    split = plots.split
    assert [s.parent for s in split.subjobs] == [1, 2, 3, 4, 5, 3, 1]
    assert split.blocks == 1
    assert split.lengths_by_parent() == {1: 3.0, 2: 1.0, 3: 2.0, 4: 1.0, 5: 1.0}


def test_idle_gap_starts_a_new_block():
    instance = Instance((
        Job(1, 0.0, 1.0, ScaledPower(1.0, 1.0)),
        Job(2, 3.0, 1.0, ScaledPower(2.0, 1.0)),
    ))
    split = split_instance(hdf_schedule(instance), instance)
    assert [s.block for s in split.subjobs] == [0, 1]


# ========== DUAL CONVERSION ==========

def test_split_duals(example1_plots):
    _, plots = example1_plots
    assert plots.tails == pytest.approx((19, 17, 14, 10, 5, 2, 0))
    assert plots.heights == pytest.approx((20, 21, 23, 26, 30, 20, 8))
    assert plots.original_heights == pytest.approx(plots.heights)


def test_convert_duals(example1, example1_plots):
    schedule, plots = example1_plots
    converted = convert_duals(plots)
    assert converted.heights == pytest.approx((8, 14, 20, 25, 30, 20, 8))
    assert converted.decreases == pytest.approx((5, 4, 2, 1, 0, 0, 0))
    assert converted.alpha() == pytest.approx({1: 24, 2: 14, 3: 40, 4: 25, 5: 30})
    assert sum(converted.subjob_alphas()) == pytest.approx(133.0)
    assert converted.beta_integral() == pytest.approx(55.0)
    assert converted.objective() == pytest.approx(fractional_cost(schedule, example1))


def test_converted_duals_are_feasible(example1, example1_plots):
    _, plots = example1_plots
    converted = convert_duals(plots)
    releases = {j.id: j.release for j in example1.jobs}
    assert converted.violations(releases) == []
    duals = converted.to_dual_solution(example1.delta)
    assert check_dual_feasibility(duals, example1) == []


def test_left_limit_at_release_does_not_bind_new_job():
    # every arrival lands on the end of another job's run
    instance = Instance((
        Job(1, 2.0, 2.0, ScaledLinear(4.0)),
        Job(2, 3.0, 3.0, ScaledLinear(4.0)),
        Job(3, 1.0, 3.0, ScaledLinear(1.0)),
        Job(4, 1.0, 3.0, ScaledLinear(3.0)),
        Job(5, 4.0, 2.0, ScaledLinear(5.0)),
    ))
    split = split_instance(hdf_schedule(instance), instance)
    converted = convert_duals(split_duals(split))
    releases = {j.id: j.release for j in instance.jobs}
    assert converted.violations(releases) == []
    duals = converted.to_dual_solution(instance.delta)
    assert check_dual_feasibility(duals, instance) == []


def test_left_limit_still_binds_earlier_jobs(example1_plots):
    _, plots = example1_plots
    converted = convert_duals(plots)
    # job 1 released at zero sees the left limit at t=1
    releases = {1: 0.0, 2: 1.0, 3: 2.0, 4: 3.0, 5: 4.0}
    rate = converted.alpha()[1] / 3.0
    assert converted.beta_on(0, 1.0) + 1.0 >= rate - 1e-9
    assert converted.violations(releases) == []


def test_converted_beta_is_nonnegative(example1_plots):
    _, plots = example1_plots
    converted = convert_duals(plots)
    for k, s in enumerate(converted.split.subjobs):
        assert converted.beta_on(k, s.start) >= -1e-9
        assert converted.beta_on(k, s.end) >= -1e-9


@pytest.mark.slow
def test_hdf_is_optimal_for_linear_costs(rng, random_linear):
    for _ in range(25):
        instance = random_linear(rng, n=5)
        schedule = hdf_schedule(instance)
        cost = fractional_cost(schedule, instance)
        assert cost == pytest.approx(solve_min_cost(build_offline(discretize(instance))).value)

        converted = convert_duals(split_duals(split_instance(schedule, instance)))
        assert converted.objective() == pytest.approx(cost)
        assert converted.violations({j.id: j.release for j in instance.jobs}) == []


SHARED_CORES = {
    "linear": ScaledLinear,
    "square": lambda rho: ScaledPower(rho, 2.0),
    "log": ScaledLog,
}


@pytest.mark.slow
@pytest.mark.parametrize("core", sorted(SHARED_CORES))
def test_hdf_matches_the_flow_optimum(rng, core):
    make = SHARED_CORES[core]
    for _ in range(70):
        n = int(rng.integers(1, 7))
        instance = Instance(tuple(
            Job(j, float(rng.integers(0, 6)), float(rng.integers(1, 5)), make(float(rng.uniform(0.5, 5.0))))
            for j in range(1, n + 1)
        ))
        schedule = hdf_schedule(instance)
        optimum = solve_min_cost(build_offline(discretize(instance))).value
        assert fractional_cost(schedule, instance) == pytest.approx(optimum, rel=1e-9, abs=1e-9)


# ========== ONLINE FLOW ALGORITHM ==========

def test_online_run_completes_every_job(example1):
    result = online_single_run(example1)
    assert result.schedule.job_ids == [1, 2, 3, 4, 5]
    assert len(result.ledger) == 5
    assert len(result.envelopes) == 5
    assert fractional_cost(result.schedule, example1) >= 78.0 - 1e-9


def test_online_arrivals_respect_their_alpha(example1):
    result = online_single_run(example1)
    for record in result.ledger:
        assert record.lemma_ok
        assert record.delta_alg >= -1e-9
    assert check_dual_feasibility(result.duals, result.instance) == []


def test_online_dual_objective_is_weak(example1):
    result = online_single_run(example1)
    optimum = solve_min_cost(build_offline(result.instance)).value
    assert result.duals.objective() <= optimum + 1e-6


def test_first_arrival_alone_pays_its_optimum(two_jobs):
    instance = two_jobs(1.0)
    result = online_single_run(instance)
    first = result.ledger[0]
    # both jobs arrive at zero, job 1 first by id
    assert first.job == 1
    assert first.delta_alg == pytest.approx(1.0)
    assert fractional_cost(result.schedule, instance) == pytest.approx(5.0)


def test_warm_start_matches_cold(example1):
    warm = online_single_run(example1, warm=True)
    cold = online_single_run(example1, warm=False)
    assert fractional_cost(warm.schedule, example1) == pytest.approx(fractional_cost(cold.schedule, example1))
    assert [r.alpha_new for r in warm.ledger] == pytest.approx([r.alpha_new for r in cold.ledger])


@pytest.mark.slow
def test_online_runs_on_random_instances(rng, random_linear):
    for _ in range(15):
        instance = random_linear(rng, n=5)
        result = online_single_run(instance, epsilon=1.0)
        assert all(record.lemma_ok for record in result.ledger)
        assert check_dual_feasibility(result.duals, result.instance) == []


def test_online_state_needs_one_machine():
    job = UnrelatedJob(1, 0.0, (1.0, 1.0), (ScaledPower(1.0, 1.0), ScaledPower(1.0, 1.0)))
    dinst = discretize(UnrelatedInstance((job,), machines=2))
    with pytest.raises(ValidationError):
        OnlineState(dinst)


def test_beta_hat_of_a_plan():
    plan = {1: [(0.0, 1.0), (3.0, 5.0)]}
    costs = {1: ScaledLinear(2.0)}
    assert beta_hat_single(plan, costs, 0.0) == pytest.approx(6.0)
    assert beta_hat_single(plan, costs, 4.0) == pytest.approx(2.0)
    assert beta_hat_single(plan, costs, 5.0) == 0.0
    # 5 on [0, 1], 8 on [1, 3], 4 on [3, 5]
    assert beta_hat_integral(plan, costs, 0.0) == pytest.approx(17.0)


def test_sparser_arrival_keeps_warm_and_cold_plans_equal():
    instance = Instance((
        Job(1, 0.0, 2.0, ScaledLinear(2.0)),
        Job(2, 1.0, 1.0, ScaledLinear(1.0)),
    ))
    warm = online_single_run(instance, warm=True)
    cold = online_single_run(instance, warm=False)
    # job 1 keeps slot 1 at cost 3, job 2 takes slot 2 at cost 2.5
    assert warm.ledger[1].delta_alg == pytest.approx(2.5)
    assert [r.delta_alg for r in warm.ledger] == pytest.approx([r.delta_alg for r in cold.ledger])
    assert [r.alpha_new for r in warm.ledger] == pytest.approx([r.alpha_new for r in cold.ledger])
    assert warm.schedule.machines[0] == cold.schedule.machines[0]


def test_warm_start_matches_cold_on_random_instances(rng):
    for _ in range(30):
        # distinct densities give a unique optimal plan at every arrival
        rhos = rng.permutation(6) + 1.0
        instance = Instance(tuple(
            Job(j + 1, float(rng.integers(0, 5)), float(rng.integers(1, 4)), ScaledLinear(float(rhos[j])))
            for j in range(6)
        ))
        warm = online_single_run(instance, warm=True)
        cold = online_single_run(instance, warm=False)
        assert fractional_cost(warm.schedule, instance) == pytest.approx(fractional_cost(cold.schedule, instance))
        assert [r.delta_alg for r in warm.ledger] == pytest.approx([r.delta_alg for r in cold.ledger])


def _stream(rng, cost):
    n = int(rng.integers(1, 9))
    return Instance(tuple(
        Job(j, float(rng.integers(0, 6)), float(rng.integers(1, 4)), cost(rng))
        for j in range(1, n + 1)
    ))


@pytest.mark.slow
@pytest.mark.parametrize("epsilon, cost", [
    (1.0, lambda rng: ScaledLog(float(rng.uniform(0.5, 3.0)))),
    (3.0, lambda rng: Polynomial((float(rng.uniform(0.0, 1.0)), float(rng.uniform(0.1, 1.0))))),
], ids=["log-speed2", "quadratic-speed4"])
def test_online_ratio_with_speed(rng, epsilon, cost):
    excluded = 0
    for _ in range(100):
        instance = _stream(rng, cost)
        result = online_single_run(instance, epsilon=epsilon)
        run = RunOutput("alg2", result.instance, result.schedule, result.duals, result.ledger)
        report = competitive_report(run, epsilon=epsilon)
        if report.ledger_summary["postponement_violations"]:
            excluded += 1
            continue
        assert report.bound == pytest.approx(2.0)
        assert report.ratio <= 2.0 * (1.0 + 1e-6)
        assert report.ledger_summary["lemma_violations"] == 0
    assert excluded < 100
