import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entroflow.errors import ConfigurationError, DomainError
from entroflow.grid import WALL, Grid1D, ScalarField, integrate
from entroflow.lubrication import LubricationState, TimeStepper
from entroflow.electrified import (
    apply_I,
    electrified_lyapunov,
    electrified_run,
    electrified_step,
    kernel,
    kernel_audit,
    measure_eigenvalues,
    nonlocal_energy,
    nu,
    spectral_apply_I,
    swnl_params,
    swnl_run,
    swnl_step,
)
from entroflow.shallow_water import ShallowWaterState, velocity_field

from conftest import smooth_positive, wall_field

# Rayleigh quotient of apply_I on cos(pi x), recorded by the oracle run
COS_EIGENVALUE = {256: -3.141592576585258, 512: -3.14159264396419}


def unit_wall(n):
    return Grid1D(n, 1.0, WALL)


# -- kernel ---------------------------------------------------------------------------


def test_nu_reference_value():
    assert nu(0.25, 0.75) == pytest.approx(3 * math.pi / 4, rel=1e-15, abs=0)


def test_nu_symmetric():
    x = np.array([0.1, 0.3, 0.77])
    y = np.array([0.9, 0.2, 0.31])
    np.testing.assert_array_equal(nu(x, y), nu(y, x))


@pytest.mark.parametrize("delta, tol", [(1e-2, 1e-3), (1e-3, 1e-5)])
def test_nu_near_diagonal(delta, tol):
    assert nu(0.5, 0.5 + delta) * delta**2 == pytest.approx(1 / math.pi, rel=tol)


@pytest.mark.parametrize("x, y", [(0.3, 0.3), (0.0, 0.5), (0.5, 1.0), (-0.1, 0.2)])
def test_nu_domain(x, y):
    with pytest.raises(DomainError):
        nu(x, y)


def test_kernel_needs_unit_wall_grid():
    with pytest.raises(ConfigurationError):
        kernel(Grid1D(16))
    with pytest.raises(ConfigurationError):
        kernel(Grid1D(16, 2.0, WALL))


@pytest.mark.parametrize("n", [32, 256])
def test_kernel_audit_passes(n):
    audit = kernel_audit(kernel(unit_wall(n)))
    assert audit["passed"], audit
    assert audit["constant_residual"] == 0.0


def test_apply_I_constant_is_zero():
    g = unit_wall(256)
    np.testing.assert_array_equal(apply_I(ScalarField(g, np.full(256, 3.7))).values, 0.0)


def test_apply_I_symmetric(rng):
    g = unit_wall(64)
    k = kernel(g)
    a, b = rng.standard_normal(64), rng.standard_normal(64)
    assert a @ k.apply(b) == pytest.approx(b @ k.apply(a), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), modes=st.integers(1, 8))
def test_apply_I_form_nonpositive(seed, modes):
    g = unit_wall(128)
    h = smooth_positive(np.random.default_rng(seed), g, modes=modes)
    assert integrate(h.with_values(apply_I(h).values * h.values)) <= 1e-12


@pytest.mark.parametrize("n", [256, 512])
def test_cosine_is_eigenfunction(n):
    h = wall_field(n, lambda x: np.cos(np.pi * x))
    out = apply_I(h).values
    c = COS_EIGENVALUE[n]
    assert np.max(np.abs(out - c * h.values)) <= 1e-12 * np.max(np.abs(out))
    assert c == pytest.approx(-math.pi, rel=1e-6)


def test_eigenvalues_match_frozen_oracle():
    lam = measure_eigenvalues(kernel(unit_wall(256)))
    assert lam[0] == pytest.approx(0.0, abs=1e-12)
    assert lam[1] == pytest.approx(COS_EIGENVALUE[256], rel=1e-12)
    assert np.all(np.diff(lam) < 0)


def test_spectral_route_agrees(rng):
    g = unit_wall(256)
    k = kernel(g)
    lam = measure_eigenvalues(k)
    for _ in range(5):
        h = smooth_positive(rng, g, modes=6)
        quad = apply_I(h, k).values
        spec = spectral_apply_I(h.values, lam)
        assert np.max(np.abs(spec - quad)) <= 1e-6 * np.max(np.abs(quad))


def test_energies_differ_by_sign_of_nonlocal_part(rng):
    h = smooth_positive(rng, unit_wall(64))
    e_minus, e_plus = nonlocal_energy(h), electrified_lyapunov(h)
    assert e_minus >= e_plus


# -- electrified thin film ---------------------------------------------------------------


def test_electrified_fixed_point():
    h = ScalarField(unit_wall(32), np.full(32, 0.9))
    new = electrified_step(LubricationState(0.0, h), TimeStepper(dt_init=1e-3))
    np.testing.assert_array_equal(new.h.values, h.values)


def test_electrified_rejects_periodic():
    h = ScalarField(Grid1D(16), np.ones(16))
    with pytest.raises(ConfigurationError):
        electrified_step(LubricationState(0.0, h), TimeStepper())


def test_electrified_run_mass_and_energy():
    h0 = wall_field(64, lambda x: 1 + 0.1 * np.cos(np.pi * x))
    m0 = integrate(h0)
    energies = [nonlocal_energy(h0)]
    drift = []

    def record(state, dt):
        energies.append(nonlocal_energy(state.h))
        drift.append(abs(integrate(state.h) - m0) / m0)

    state, ledger = electrified_run(h0, TimeStepper(dt_init=1e-4, dt_max=1e-3), 1.0, max_steps=50, on_step=record)
    assert len(drift) == 50 and max(drift) <= 1e-12
    assert np.all(np.diff(energies) <= 1e-8)
    assert np.all(np.diff(ledger.column("energy")) <= 1e-12)
    assert state.h.values.min() > 0


def test_electrified_flattens_bump():
    h0 = wall_field(64, lambda x: 1 + 0.1 * np.cos(np.pi * x))
    state, _ = electrified_run(h0, TimeStepper(dt_init=1e-4, dt_max=1e-2), 0.05)
    assert np.ptp(state.h.values) < np.ptp(h0.values)


# -- nonlocal shallow water ----------------------------------------------------------------


def test_swnl_params_defaults():
    p = swnl_params()
    assert p.viscous_coeff == 1.0 and p.capillary_coeff == 1.0


def test_swnl_fixed_point():
    g = unit_wall(32)
    s = ShallowWaterState(0.0, ScalarField(g, np.full(32, 1.1)), velocity_field(g, np.zeros(g.n_faces)))
    new = swnl_step(s, swnl_params(), TimeStepper(dt_init=1e-3))
    np.testing.assert_array_equal(new.h.values, s.h.values)
    np.testing.assert_array_equal(new.u.values, 0.0)


def test_swnl_mass_and_wall_velocity():
    h0 = wall_field(64, lambda x: 1 + 0.1 * np.cos(np.pi * x))
    m0 = integrate(h0)
    drift = []
    state, _ = swnl_run(
        h0, swnl_params(eps=1e-2), TimeStepper(dt_init=1e-3, dt_max=1e-3), 0.05,
        on_step=lambda s, dt: drift.append(abs(integrate(s.h) - m0) / m0),
    )
    assert max(drift) <= 1e-12
    assert state.u.values[-1] == 0.0
    assert state.h.values.min() > 0


def test_swnl_drag_decays_uniform_velocity():
    g = unit_wall(32)
    h0 = ScalarField(g, np.ones(32))
    m0 = np.full(g.n_faces, 0.2)
    state, _ = swnl_run(h0, swnl_params(eps=1e-2), TimeStepper(dt_init=1e-4, dt_max=1e-4), 0.05, m0=m0)
    assert np.abs(state.u.values).max() < 0.02
