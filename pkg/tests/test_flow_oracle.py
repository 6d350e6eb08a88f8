"""Min-cost flow oracle, duals and independent checks"""
from fractions import Fraction
import math

import pytest

from hgfc.core.costfn import ScaledLinear, ScaledPower
from hgfc.core.flow_oracle import (
    brute_force_opt,
    build_offline,
    build_rnf,
    dominance_order,
    extract_duals,
    hjb_check,
    integerize_speed,
    maximal_beta,
    solve_min_cost,
    value_function,
)
from hgfc.core.model import Instance, Job, RemainingState, discretize
from hgfc.exceptions import (
    NonIntegralCapacityError,
    NonOptimalInputError,
    TooLargeError,
    ValidationError,
)


# ========== SPEEDS ==========

def test_integerize_speed():
    assert integerize_speed(1) == Fraction(1)
    assert integerize_speed(0.5) == Fraction(1, 2)
    assert integerize_speed(Fraction(2, 3)) == Fraction(2, 3)
    with pytest.raises(NonIntegralCapacityError):
        integerize_speed(math.pi)
    with pytest.raises(ValidationError):
        integerize_speed(0)


# ========== NETWORK ==========

def test_offline_network_has_a_sentinel_slot(two_jobs):
    network = build_offline(discretize(two_jobs(1.0)))
    assert network.start == 0
    assert network.horizon == 4
    assert network.sentinel == 3
    assert network.total_supply == 3
    assert network.dump_edges().splitlines()[0] == "1 0 1.0 1"


def test_slow_network_scales_supply(two_jobs):
    network = build_offline(discretize(two_jobs(1.0)), speed=Fraction(1, 2))
    assert network.units_per_slot == 2
    assert network.slot_capacity == 1
    assert network.total_supply == 6
    assert network.horizon == 7


@pytest.mark.parametrize("delta", [1.0, 0.5, 0.25, 0.125])
def test_two_job_optimum_and_duals(two_jobs, delta):
    """Exact optimum is 5 with duals alpha = (4, 6)"""
    network = build_offline(discretize(two_jobs(delta)))
    solution = solve_min_cost(network)
    assert solution.value == pytest.approx(5.0)
    assert solution.completion_slot(1) == round(1.0 / delta)

    duals = extract_duals(network, solution)
    assert duals.alpha[1] == pytest.approx(4.0 + delta)
    assert duals.alpha[2] == pytest.approx(6.0 + delta)
    assert abs(duals.alpha[1] - 4.0) <= 3 * delta
    assert duals.objective() == pytest.approx(5.0)
    assert duals.violations() == []


def test_unit_grid_distances(two_jobs):
    network = build_offline(discretize(two_jobs(1.0)))
    solution = solve_min_cost(network)
    duals = extract_duals(network, solution)
    assert [duals.beta_at(s) for s in range(4)] == pytest.approx([4.0, 2.0, 1.0, 0.0])
    assert duals.alpha_rate(1) == pytest.approx(5.0)
    assert duals.alpha_rate(2) == pytest.approx(3.5)


def test_slower_machine_costs_more(two_jobs):
    dinst = discretize(two_jobs(1.0))
    fast = solve_min_cost(build_offline(dinst)).value
    slow = solve_min_cost(build_offline(dinst, speed=Fraction(1, 2))).value
    assert slow > fast


def test_maximal_beta_keeps_the_objective(two_jobs):
    network = build_offline(discretize(two_jobs(0.5)))
    solution = solve_min_cost(network)
    seed = extract_duals(network, solution)
    raised = maximal_beta(network, solution.value, solution)
    assert raised.objective() == pytest.approx(solution.value)
    assert raised.violations() == []
    for slot in network.slots:
        assert raised.beta_at(slot) >= seed.beta_at(slot) - 1e-9


def test_maximal_beta_rejects_a_gap(two_jobs):
    network = build_offline(discretize(two_jobs(1.0)))
    solution = solve_min_cost(network)
    with pytest.raises(NonOptimalInputError):
        maximal_beta(network, solution.value + 1.0, solution)


def test_warm_start_matches_cold_solve(two_jobs):
    dinst = discretize(two_jobs(1.0))
    first = solve_min_cost(build_rnf(RemainingState(clock=0, residuals={1: 1}), dinst))
    both = build_rnf(RemainingState(clock=0, residuals={1: 1, 2: 2}), dinst)
    warm = solve_min_cost(both, seed_flows=first.flows)
    cold = solve_min_cost(both)
    assert warm.value == pytest.approx(cold.value)
    assert sum(p.units for p in warm.paths) == 2


def test_seed_outside_the_network_is_rejected(two_jobs):
    dinst = discretize(two_jobs(1.0))
    network = build_rnf(RemainingState(clock=1, residuals={2: 2}), dinst)
    with pytest.raises(ValidationError):
        solve_min_cost(network, seed_flows=[(2, 0, 1)])


# ========== INDEPENDENT ORACLES ==========

def test_flow_matches_brute_force(example1):
    dinst = discretize(example1)
    assert brute_force_opt(dinst) == pytest.approx(78.0)
    assert solve_min_cost(build_offline(dinst)).value == pytest.approx(78.0)


@pytest.mark.slow
def test_flow_matches_brute_force_on_random_instances(rng, random_linear):
    for _ in range(20):
        dinst = discretize(random_linear(rng, n=3, max_length=3))
        if dinst.total_slots() > 10:
            continue
        expected = brute_force_opt(dinst)
        assert solve_min_cost(build_offline(dinst)).value == pytest.approx(expected)


def _small_instance(rng, n, max_release, max_length=3):
    jobs = []
    for j in range(1, n + 1):
        rho = float(rng.uniform(0.5, 4.0))
        cost = ScaledLinear(rho) if rng.random() < 0.5 else ScaledPower(rho, 2.0)
        jobs.append(Job(j, float(rng.integers(0, max_release + 1)), float(rng.integers(1, max_length + 1)), cost))
    return Instance(tuple(jobs))


@pytest.mark.slow
def test_oracle_is_exact_with_zero_duality_gap(rng):
    checked = 0
    while checked < 100:
        dinst = discretize(_small_instance(rng, n=int(rng.integers(1, 5)), max_release=3))
        if dinst.total_slots() > 8:
            continue
        network = build_offline(dinst)
        solution = solve_min_cost(network)
        assert solution.value == pytest.approx(brute_force_opt(dinst), rel=1e-9, abs=1e-9)
        duals = extract_duals(network, solution)
        assert abs(duals.objective() - solution.value) <= 1e-9 * (1.0 + abs(solution.value))
        assert duals.violations() == []
        checked += 1


@pytest.mark.slow
def test_maximal_beta_only_rises_when_a_job_arrives(rng):
    for _ in range(100):
        base = _small_instance(rng, n=int(rng.integers(1, 5)), max_release=0)
        added = _small_instance(rng, n=1, max_release=0).jobs[0]
        grown = Instance(base.jobs + (Job(len(base.jobs) + 1, 0.0, added.length, added.cost),))

        before_net = build_offline(discretize(base))
        before_sol = solve_min_cost(before_net)
        before = maximal_beta(before_net, before_sol.value, before_sol)
        after_net = build_offline(discretize(grown))
        after_sol = solve_min_cost(after_net)
        after = maximal_beta(after_net, after_sol.value, after_sol)
        for slot in before_net.slots:
            assert after.beta_at(slot) >= before.beta_at(slot) - 1e-9


def test_brute_force_cap():
    instance = Instance((Job(1, 0.0, 11.0, ScaledLinear(1.0)),))
    with pytest.raises(TooLargeError):
        brute_force_opt(discretize(instance))


def test_dominance_order():
    costs = {1: ScaledLinear(1.0), 2: ScaledLinear(3.0), 3: ScaledLinear(2.0)}
    assert dominance_order(costs, horizon=10.0) == [2, 3, 1]
    with pytest.raises(ValidationError):
        dominance_order({1: ScaledLinear(2.0), 2: ScaledPower(1.0, 2.0)}, horizon=10.0)


# ========== VALUE FUNCTION ==========

def test_value_function(two_jobs):
    dinst = discretize(two_jobs(1.0))
    assert value_function(dinst, {1: 1, 2: 2}, 0) == pytest.approx(5.0)
    assert value_function(dinst, {1: 1, 2: 2}, 1) == pytest.approx(9.0)
    assert value_function(dinst, {1: 0, 2: 0}, 3) == 0.0


def test_duals_are_finite_differences_of_the_value(two_jobs):
    records = hjb_check(discretize(two_jobs(1.0)))
    assert [(r.slot, r.job) for r in records] == [(0, 1), (1, 2), (2, 2)]
    for record in records:
        assert record.beta_error == pytest.approx(0.0, abs=1e-9)
        assert record.alpha_error == pytest.approx(0.0, abs=1e-9)


def test_hjb_check_needs_common_release(example1):
    with pytest.raises(ValidationError):
        hjb_check(discretize(example1))


@pytest.mark.slow
@pytest.mark.parametrize("delta", [1.0, 0.5])
def test_duals_track_finite_differences_on_random_instances(rng, delta):
    for _ in range(25):
        dinst = discretize(_small_instance(rng, n=int(rng.integers(1, 4)), max_release=0), delta=delta)
        steepest = max(j.costs[0].derivative(dinst.horizon * delta) for j in dinst.jobs)
        bound = 5.0 * delta * steepest + 1e-9
        for record in hjb_check(dinst):
            assert record.beta_error <= bound
            assert record.alpha_error <= bound
