"""Cost function families and their constants"""
import math

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st
from scipy.integrate import quad

from hgfc.core.costfn import (
    PiecewiseLinear,
    Polynomial,
    ScaledLinear,
    ScaledLog,
    ScaledPower,
    curvature_K,
    curvature_report,
    d_constant,
    definite_integral,
    dominates,
    evaluate,
    shared_core_densities,
    shift_stretch,
    stretch_theta,
)
from hgfc.exceptions import NotDifferentiableError, ValidationError

densities = st.floats(min_value=0.1, max_value=10.0, allow_nan=False)
shifts = st.floats(min_value=0.0, max_value=5.0, allow_nan=False)
spans = st.floats(min_value=0.0, max_value=8.0, allow_nan=False)


@st.composite
def cost_functions(draw):
    family = draw(st.sampled_from(["linear", "power", "poly", "log", "pwl"]))
    rho = draw(densities)
    shift = draw(shifts)
    if family == "linear":
        return ScaledLinear(rho=rho, shift=shift)
    if family == "power":
        return ScaledPower(rho=rho, k=draw(st.floats(min_value=1.0, max_value=4.0)), shift=shift)
    if family == "poly":
        coeffs = draw(st.lists(st.floats(min_value=0.0, max_value=3.0), min_size=1, max_size=4))
        return Polynomial(coeffs=tuple(coeffs), shift=shift)
    if family == "log":
        return ScaledLog(rho=rho, shift=shift)
    slopes = draw(st.lists(st.floats(min_value=0.0, max_value=4.0), min_size=1, max_size=4))
    points = [(0.0, 0.0)]
    for i, slope in enumerate(slopes, start=1):
        points.append((float(i), points[-1][1] + slope))
    return PiecewiseLinear(breakpoints=tuple(points), shift=shift)


# ========== CLOSED FORMS ==========

def test_linear_values():
    g = ScaledLinear(rho=2.0)
    assert g(3.0) == 6.0
    assert g.derivative(5.0) == 2.0
    assert g.second_derivative(5.0) == 0.0
    assert g.integral(0.0, 2.0) == pytest.approx(4.0)


def test_shifted_power_is_zero_at_its_shift():
    g = ScaledPower(rho=1.0, k=2.0, shift=1.0)
    assert g(1.0) == 0.0
    assert g(3.0) == pytest.approx(4.0)
    assert g.derivative(3.0) == pytest.approx(4.0)
    assert g.integral(1.0, 4.0) == pytest.approx(9.0)
    assert definite_integral(g, 1.0, 4.0) == g.integral(1.0, 4.0)


def test_evaluation_before_shift_is_rejected():
    g = ScaledPower(rho=1.0, k=2.0, shift=2.0)
    with pytest.raises(ValidationError):
        g(1.0)


def test_polynomial_integral():
    g = Polynomial(coeffs=(1.0, 1.0))
    assert g.degree == 2
    assert g.integral(0.0, 1.0) == pytest.approx(0.5 + 1.0 / 3.0)


def test_log_is_concave():
    g = ScaledLog(rho=2.0)
    assert g(math.e - 1.0) == pytest.approx(2.0)
    assert not g.convex
    assert g.second_derivative(1.0) < 0


def test_piecewise_linear_continues_last_slope():
    g = PiecewiseLinear(breakpoints=((0, 0), (1, 1), (2, 3)))
    assert g(1.5) == pytest.approx(2.0)
    assert g(3.0) == pytest.approx(5.0)
    assert g.integral(0.0, 2.0) == pytest.approx(2.5)
    assert g.convex


def test_piecewise_linear_kink_has_no_second_derivative():
    g = PiecewiseLinear(breakpoints=((0, 0), (1, 1), (2, 3)))
    with pytest.raises(NotDifferentiableError):
        g.second_derivative(1.0)


def test_piecewise_linear_must_start_at_origin():
    with pytest.raises(ValidationError):
        PiecewiseLinear(breakpoints=((1, 0), (2, 1)))


def test_negative_parameters_are_rejected():
    with pytest.raises(ValidationError):
        ScaledLinear(rho=-1.0)
    with pytest.raises(ValidationError):
        ScaledPower(rho=1.0, k=0.5)
    with pytest.raises(ValidationError):
        Polynomial(coeffs=(1.0, -0.5))


def test_evaluate_orders():
    g = ScaledPower(rho=1.0, k=3.0)
    assert evaluate(g, 2.0) == pytest.approx(8.0)
    assert evaluate(g, 2.0, order=1) == pytest.approx(12.0)
    assert evaluate(g, 2.0, order=2) == pytest.approx(12.0)
    with pytest.raises(ValidationError):
        evaluate(g, 2.0, order=3)


# ========== PROPERTIES ==========

@hyp_settings(max_examples=60, deadline=None)
@given(g=cost_functions(), start=spans, width=spans)
def test_integral_matches_quadrature(g, start, width):
    a = g.shift + start
    b = a + width
    expected, _ = quad(g, a, b, limit=200)
    assert g.integral(a, b) == pytest.approx(expected, rel=1e-6, abs=1e-6)


@hyp_settings(max_examples=60, deadline=None)
@given(g=cost_functions(), start=spans, width=spans)
def test_costs_are_nonnegative_and_nondecreasing(g, start, width):
    a = g.shift + start
    b = a + width
    assert g(a) >= 0.0
    assert g(b) >= g(a) - 1e-9


@hyp_settings(max_examples=40, deadline=None)
@given(g=cost_functions(), r=spans, v=st.floats(min_value=0.1, max_value=5.0))
def test_d_constant_is_the_average_cost(g, r, v):
    start = g.shift + r
    d = d_constant(g, start, v)
    assert g(start) - 1e-9 <= d <= g(start + v) + 1e-9


# ========== CONSTANTS ==========

def test_curvature_of_families():
    assert curvature_K([ScaledLinear(1.0)]) == 1.0
    assert curvature_K([ScaledPower(1.0, 3.0)]) == pytest.approx(3.0)
    assert curvature_K([ScaledLinear(1.0), ScaledPower(1.0, 2.0)]) == pytest.approx(2.0)
    assert curvature_K([]) == 1.0


def test_shifted_power_diverges_in_absolute_time():
    report = curvature_report([ScaledPower(1.0, 2.0, shift=2.0)], horizon=20.0)
    assert report["local"] == pytest.approx(2.0)
    assert math.isinf(report["absolute"])


def test_stretch_constant_closed_forms():
    assert stretch_theta([ScaledLinear(2.0)], [1.0, 3.0]) == 1.0
    assert stretch_theta([ScaledPower(1.0, 2.0)], [2.0]) == pytest.approx(1.5)
    # 1 + a v / (2 a v + b) with a = 1, b = 2, v = 1
    assert stretch_theta([Polynomial((2.0, 1.0))], [1.0]) == pytest.approx(1.25)


def test_stretch_constant_needs_lengths():
    with pytest.raises(ValidationError):
        stretch_theta([ScaledLinear(1.0)], [])


def test_shift_stretch_from_the_release():
    # 1 + a v / (2 a t + b) with a = 1, b = 2, v = 1
    assert shift_stretch(Polynomial((2.0, 1.0)), 1.0, 0.0) == pytest.approx(1.5)
    assert shift_stretch(Polynomial((2.0, 1.0)), 1.0, 1.0) == pytest.approx(
        stretch_theta([Polynomial((2.0, 1.0))], [1.0])
    )
    assert shift_stretch(ScaledLinear(3.0), 2.0, 0.0) == 1.0
    assert shift_stretch(ScaledPower(1.0, 2.0, shift=2.0), 1.0, 3.0) == pytest.approx(1.5)
    assert math.isinf(shift_stretch(ScaledPower(1.0, 2.0), 1.0, 0.0))
    with pytest.raises(ValidationError):
        shift_stretch(ScaledLinear(1.0), 0.0, 0.0)


def test_shift_stretch_on_a_grid():
    g = Polynomial((0.5, 1.0, 0.2))
    us = np.linspace(0.5, 50.0, 200001)
    dense = float(np.max((g._value(us + 2.0) - g._value(us)) / (2.0 * g._derivative(us))))
    assert shift_stretch(g, 2.0, 0.5, horizon=50.0) == pytest.approx(dense, rel=1e-4)


def test_dominance():
    assert dominates(ScaledLinear(3.0), ScaledLinear(1.0), horizon=10.0)
    assert not dominates(ScaledLinear(1.0), ScaledLinear(3.0), horizon=10.0)


def test_shared_core_densities():
    assert shared_core_densities([ScaledLinear(1.0), ScaledLinear(3.0)]) == [1.0, 3.0]
    assert shared_core_densities([ScaledLinear(1.0), ScaledPower(1.0, 2.0)]) is None
    assert shared_core_densities([ScaledPower(2.0, 2.0), ScaledPower(4.0, 2.0)]) == [2.0, 4.0]
