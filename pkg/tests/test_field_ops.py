import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from entroflow.errors import ConfigurationError, DomainError
from entroflow.grid import (
    ARITHMETIC,
    ENTROPIC,
    PERIODIC,
    WALL,
    Grid1D,
    ScalarField,
    dx,
    dxx,
    dxxx,
    face_average,
    integrate,
    operators,
)
from entroflow.mobility import MobilitySpec

from conftest import periodic_field, wall_field

TWO_PI = 2 * math.pi


# -- Grid1D ----------------------------------------------------------------------


def test_grid_rejects_small_or_bad():
    with pytest.raises(ConfigurationError):
        Grid1D(7)
    with pytest.raises(ConfigurationError):
        Grid1D(16, length=0.0)
    with pytest.raises(ConfigurationError):
        Grid1D(16, topology="torus")


def test_grid_positions():
    g = Grid1D(10, 2.0, PERIODIC)
    assert g.spacing == 2.0 / 10
    np.testing.assert_array_equal(g.x, np.arange(10) * 0.2)
    w = Grid1D(10, 2.0, WALL)
    np.testing.assert_allclose(w.x, (np.arange(10) + 0.5) * 0.2, rtol=0, atol=1e-15)
    assert g.n_faces == 10 and w.n_faces == 9


def test_field_length_checked():
    with pytest.raises(ConfigurationError):
        ScalarField(Grid1D(8), np.zeros(9))


# -- derivatives -------------------------------------------------------------------


@pytest.mark.parametrize("op", [dx, dxx, dxxx])
@pytest.mark.parametrize("topology", [PERIODIC, WALL])
def test_constant_differentiates_to_zero(op, topology):
    f = ScalarField(Grid1D(32, 1.0, topology), np.full(32, 3.7))
    np.testing.assert_allclose(op(f).values, 0.0, atol=1e-9)


def test_dx_linear_on_wall():
    f = wall_field(32, lambda x: x)
    np.testing.assert_allclose(dx(f).values, 1.0, rtol=1e-12)


def test_dxx_quadratic_on_wall_interior():
    f = wall_field(32, lambda x: x**2)
    np.testing.assert_allclose(dxx(f).values, 2.0, rtol=1e-8)


def test_dxxx_cubic_on_wall_interior():
    f = wall_field(64, lambda x: x**3)
    # dx of the exact second derivative 6x is exact in the interior
    np.testing.assert_allclose(dxxx(f).values[2:-2], 6.0, rtol=1e-7)


def _max_err(op, exact, n):
    f = periodic_field(n, lambda x: np.sin(TWO_PI * x))
    return float(np.max(np.abs(op(f).values - exact(f.grid.x))))


CASES = [
    (dx, lambda x: TWO_PI * np.cos(TWO_PI * x)),
    (dxx, lambda x: -(TWO_PI**2) * np.sin(TWO_PI * x)),
    (dxxx, lambda x: -(TWO_PI**3) * np.cos(TWO_PI * x)),
]


@pytest.mark.parametrize("op,exact", CASES)
def test_second_order_on_sine(op, exact):
    errs = [_max_err(op, exact, n) for n in (32, 64, 128, 256)]
    ratios = [a / b for a, b in zip(errs[:-1], errs[1:])]
    assert min(ratios) >= 3.5


def test_dx_sine_error_constant():
    # error = C * spacing^2 with C ~ (2 pi)^3 / 6 for the central difference
    err = _max_err(dx, CASES[0][1], 128)
    C = err / (1 / 128) ** 2
    assert C == pytest.approx(TWO_PI**3 / 6, rel=1e-3)


def test_dxx_cos_periodic():
    f = periodic_field(128, lambda x: np.cos(TWO_PI * x))
    err = np.max(np.abs(dxx(f).values + TWO_PI**2 * np.cos(TWO_PI * f.grid.x)))
    assert err <= (TWO_PI**4 / 12) * (1 / 128) ** 2 * 1.01


def test_wall_stencils_second_order():
    errs = []
    for n in (32, 64, 128, 256):
        f = wall_field(n, lambda x: np.exp(x))
        errs.append(np.max(np.abs(dx(f).values - np.exp(f.grid.x))))
    assert min(a / b for a, b in zip(errs[:-1], errs[1:])) >= 3.5


# -- integration -----------------------------------------------------------------


def test_integrate_one():
    f = ScalarField(Grid1D(16, 3.5), np.ones(16))
    assert integrate(f) == pytest.approx(3.5, rel=1e-15)


def test_integrate_sine_period_zero():
    f = periodic_field(64, lambda x: np.sin(TWO_PI * x / 2.0), length=2.0)
    assert abs(integrate(f)) < 1e-15


def test_integrate_x_squared_midpoint():
    f = wall_field(256, lambda x: x**2)
    # midpoint rule error is exactly -h^2/12 * int f'' = -h^2/12 * 2 / ... for x^2
    assert abs(integrate(f) - 1 / 3) <= 1e-5
    assert integrate(f) == pytest.approx(1 / 3 - (1 / 256) ** 2 / 12, rel=1e-13)


# -- face averages ---------------------------------------------------------------------


def test_entropic_mean_equal_values():
    mob = MobilitySpec.power_law(3.0)
    f = ScalarField(Grid1D(8), np.full(8, 0.7))
    np.testing.assert_allclose(face_average(f, ENTROPIC, mob), 0.7**3, rtol=1e-14)


def test_entropic_mean_h_squared():
    mob = MobilitySpec.power_law(2.0)
    assert float(mob.entropic_mean(1.0, 2.0)) == pytest.approx(2.0, rel=1e-14)


def test_arithmetic_mean():
    f = ScalarField(Grid1D(8, 1.0, WALL), np.array([1.0, 3.0, 1, 1, 1, 1, 1, 1]))
    assert face_average(f, ARITHMETIC)[0] == 2.0


def test_entropic_needs_mobility_and_positivity():
    f = ScalarField(Grid1D(8), np.ones(8))
    with pytest.raises(ConfigurationError):
        face_average(f, ENTROPIC)
    with pytest.raises(DomainError):
        face_average(f.with_values(np.r_[0.0, np.ones(7)]), ENTROPIC, MobilitySpec())


@pytest.mark.parametrize("mob", [MobilitySpec.power_law(0.5), MobilitySpec.power_law(3.0),
                                 MobilitySpec.quadratic_cubic()])
def test_entropic_mean_between_endpoint_mobilities(mob):
    a = np.linspace(0.1, 2.0, 40)
    b = a * np.linspace(1 + 1e-10, 3.0, 40)
    M = mob.entropic_mean(a, b)
    assert np.all(M >= mob.F(a) * (1 - 1e-12)) and np.all(M <= mob.F(b) * (1 + 1e-12))


@pytest.mark.parametrize("mob", [MobilitySpec.power_law(1.0), MobilitySpec.power_law(3.0),
                                 MobilitySpec.quadratic_cubic()])
def test_entropic_mean_matches_quadrature_across_branches(mob):
    # 1/M is the mean of 1/F over [a, b]; check each side of the branch switches
    from scipy.integrate import quad

    a = 0.8
    for rel in (1e-7, 5e-2 * (1 - 1e-6), 5e-2 * (1 + 1e-6), 0.5):
        b = a * (1 + rel)
        inv, _ = quad(lambda r: 1.0 / float(mob.F(r)), a, b, epsabs=0, epsrel=1e-13)
        assert float(mob.entropic_mean(a, b)) == pytest.approx((b - a) / inv, rel=1e-12)


def test_entropic_mean_derivatives_match_finite_differences():
    mob = MobilitySpec.power_law(3.0)
    a, b = np.array([0.5, 0.9, 1.0]), np.array([1.3, 0.95, 1.0 + 1e-4])
    M, dMa, dMb = mob.entropic_mean(a, b, derivatives=True)
    d = 1e-6
    fa = (mob.entropic_mean(a + d, b) - mob.entropic_mean(a - d, b)) / (2 * d)
    fb = (mob.entropic_mean(a, b + d) - mob.entropic_mean(a, b - d)) / (2 * d)
    np.testing.assert_allclose(dMa, fa, rtol=1e-6)
    np.testing.assert_allclose(dMb, fb, rtol=1e-6)


# -- properties ------------------------------------------------------------------------

values = arrays(np.float64, 16, elements=st.floats(-10, 10, allow_nan=False))


@settings(max_examples=50, deadline=None)
@given(values, values, st.floats(-5, 5), st.floats(-5, 5), st.sampled_from([PERIODIC, WALL]))
def test_operators_are_linear(f, g, a, b, topology):
    grid = Grid1D(16, 1.0, topology)
    F, G = ScalarField(grid, f), ScalarField(grid, g)
    for op in (dx, dxx, dxxx):
        lhs = op(ScalarField(grid, a * f + b * g)).values
        rhs = a * op(F).values + b * op(G).values
        scale = 1 + np.max(np.abs(op(F).values)) * abs(a) + np.max(np.abs(op(G).values)) * abs(b)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12 * scale)


@settings(max_examples=50, deadline=None)
@given(values, values)
def test_periodic_summation_by_parts(f, g):
    grid = Grid1D(16)
    F, G = ScalarField(grid, f), ScalarField(grid, g)
    s = integrate(F * dx(G)) + integrate(G * dx(F))
    scale = 1 + np.sum(np.abs(f)) * np.sum(np.abs(g))
    assert abs(s) <= 1e-13 * scale
    assert abs(integrate(dx(F))) <= 1e-13 * (1 + np.sum(np.abs(f)) * 16)


def test_operator_matrices_consistent():
    g = Grid1D(16)
    ops = operators(g)
    v = np.sin(TWO_PI * g.x)
    np.testing.assert_allclose(ops.lap @ v, dxx(ScalarField(g, v)).values, atol=1e-10)
    np.testing.assert_allclose((ops.div @ np.ones(16)), 0.0, atol=1e-12)
