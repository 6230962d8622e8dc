"""Energies, entropies and dissipation rates evaluated on discrete fields.

Gradient terms of the energies and the dissipation rates are evaluated on
faces with the same two-point differences and face means the solvers use.
This keeps every discrete balance consistent with its scheme to roundoff in
space, so that audit residuals measure time-stepping error only.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, DomainError
from .grid import ScalarField, dx, face_diff, face_pairs, integrate, integrate_faces, laplacian, operators
from .mobility import G0, MobilitySpec, g0
from .params import NONLOCAL_PRESSURE, LubricationParams, ShallowWaterParams

RAW = "raw"
ENERGY_COMBINED = "energy_combined"

_GL_T, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_T = 0.5 * (_GL_T + 1.0)
_GL_W = 0.5 * _GL_W


def _positive_field(h: ScalarField) -> np.ndarray:
    v = h.values
    if not np.all(np.isfinite(v)):
        raise DomainError("film height must be finite")
    if np.any(v <= 0):
        raise DomainError("film height must be strictly positive")
    return v


def _check_cap(h: np.ndarray, cap_A: float):
    if h.max() > cap_A:
        raise ConfigurationError(
            f"cap_A={cap_A:g} must dominate the film height (max h = {h.max():.6g})"
        )


def capillary_energy(h: ScalarField, coeff: float) -> float:
    """``coeff/2 * int (d_x h)^2`` with face differences."""
    return 0.5 * coeff * integrate_faces(h.grid, face_diff(h) ** 2)


# -- face heights for the staggered shallow-water scheme ---------------------


def sw_face_height(h: ScalarField, p: ShallowWaterParams) -> np.ndarray:
    """Face height used for momentum, mass flux and kinetic energy.

    For the power-law pressure this is the mean for which
    ``hf * (Pi'(h_R) - Pi'(h_L)) = P(h_R) - P(h_L)``, i.e. the pressure force
    in flux form; for ``beta = 1`` (and the nonlocal pressure) it is the
    arithmetic mean.
    """
    a, b = face_pairs(h)
    if p.pressure == NONLOCAL_PRESSURE or p.beta == 1.0:
        return 0.5 * (a + b)
    beta = p.beta
    rel = np.abs(b - a) / np.maximum(a, b)
    out = 0.5 * (a + b)
    far = rel > 1e-3
    if np.any(far):
        af, bf = a[far], b[far]
        out[far] = beta / (beta + 1.0) * (bf ** (beta + 1) - af ** (beta + 1)) / (bf**beta - af**beta)
    near = (~far) & (rel > 0)
    if np.any(near):
        an, dn = a[near][:, None], (b - a)[near][:, None]
        r = an + _GL_T * dn
        out[near] = (_GL_W * r**beta).sum(axis=1) / (_GL_W * r ** (beta - 1)).sum(axis=1)
    return out


def _staggered_parts(h: ScalarField, u: ScalarField, p: ShallowWaterParams):
    """(face heights, face velocities) on the stored faces."""
    hf = sw_face_height(h, p)
    uf = u.values[: h.grid.n_faces]
    return hf, uf


def kinetic_energy(h: ScalarField, u: ScalarField, p: ShallowWaterParams) -> float:
    """``eps/2 int h u^2``."""
    if u.staggered:
        hf, uf = _staggered_parts(h, u, p)
        return 0.5 * p.eps * integrate_faces(h.grid, hf * uf**2)
    return 0.5 * p.eps * integrate(h * u * u)


# -- energies -----------------------------------------------------------------


def energy_lubrication(h: ScalarField, p: LubricationParams) -> float:
    """``1/2 int h^2/Fr^2 + (d_x h)^2/We``."""
    potential = 0.5 * integrate(h * h) / p.fr**2
    return potential + capillary_energy(h, 1.0 / p.we)


def energy_shallow_water(h: ScalarField, u: ScalarField, p: ShallowWaterParams) -> float:
    """Kinetic + pressure potential + capillary energy of the shallow-water state."""
    v = _positive_field(h)
    return (
        kinetic_energy(h, u, p)
        + integrate(h.with_values(p.potential(v)))
        + capillary_energy(h, p.capillary_coeff)
    )


# -- BD entropy ---------------------------------------------------------------


def bd_velocity(h: ScalarField, u: ScalarField, p: ShallowWaterParams) -> ScalarField:
    """Artificial velocity ``u + viscous_coeff * d_x log h``.

    Staggered velocities get the two-point face gradient of ``log h``;
    nodal ones the central difference of ``log h``.
    """
    v = _positive_field(h)
    logh = h.with_values(np.log(v))
    if u.staggered:
        out = u.values.copy()
        nf = h.grid.n_faces
        out[:nf] += p.viscous_coeff * face_diff(logh)
        return ScalarField(h.grid, out, staggered=True)
    return ScalarField(h.grid, u.values + p.viscous_coeff * dx(logh).values)


def bd_entropy(h: ScalarField, u: ScalarField, p: ShallowWaterParams, mode: str = RAW) -> float:
    """BD entropy.

    ``raw``: ``eps/2 int h v^2`` plus potential and capillary energy.
    ``energy_combined``: ``eps/2 int h (v^2 - u^2) + viscous_coeff * alpha * int G0(h)``.
    """
    vals = _positive_field(h)
    v = bd_velocity(h, u, p)
    if mode == RAW:
        return (
            kinetic_energy(h, v, p)
            + integrate(h.with_values(p.potential(vals)))
            + capillary_energy(h, p.capillary_coeff)
        )
    if mode == ENERGY_COMBINED:
        return (
            kinetic_energy(h, v, p)
            - kinetic_energy(h, u, p)
            + p.viscous_coeff * p.alpha * bf_entropy(h, p)
        )
    raise ConfigurationError(f"unknown BD entropy mode {mode!r}")


# -- BF entropy ---------------------------------------------------------------


def bf_entropy(h: ScalarField, p) -> float:
    """``int G0(h)``; ``p`` is any parameter set carrying ``mobility`` and ``cap_A``."""
    v = _positive_field(h)
    _check_cap(v, p.cap_A)
    return integrate(h.with_values(G0(v, p.mobility, p.cap_A)))


def drift_face(h: ScalarField, p: LubricationParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Arithmetic face mean of D(h) and its derivatives w.r.t. the two neighbours."""
    a, b = face_pairs(h)
    Df = 0.5 * (p.D(a) + p.D(b))
    return Df, 0.5 * p.dD(a), 0.5 * p.dD(b)


def bf_dissipation_rate(h: ScalarField, p: LubricationParams) -> float:
    """``int (d_xx h)^2/(alpha We) + (D/F)(h) (d_x h)^2/(alpha Fr^2)``.

    The drift weight is evaluated on faces as ``D_face / M_face`` (``M`` the
    entropic mobility mean).  ``alpha_in_dissipation=False`` drops ``alpha``.
    """
    _positive_field(h)
    scale = 1.0 / p.alpha if p.alpha_in_dissipation else 1.0
    lap = laplacian(h.grid, h.values)
    a, b = face_pairs(h)
    M = p.mobility.entropic_mean(a, b)
    Df = drift_face(h, p)[0]
    grad = face_diff(h)
    cap = integrate(h.with_values(lap * lap)) / p.we
    drift = integrate_faces(h.grid, Df / M * grad**2) / p.fr**2
    return scale * (cap + drift)


def lubrication_face_flux(h: ScalarField, p: LubricationParams) -> np.ndarray:
    """Face flux ``M (d_x d_xx h)/(alpha We) - D (d_x h)/(alpha Fr^2)``."""
    ops = operators(h.grid)
    a, b = face_pairs(h)
    M = p.mobility.entropic_mean(a, b)
    Df = drift_face(h, p)[0]
    third = ops.grad @ laplacian(h.grid, h.values)
    return p.capillary * M * third - p.drift * Df * (ops.grad @ h.values)


def energy_dissipation_rate_lub(h: ScalarField, p: LubricationParams, u: ScalarField | None = None) -> float:
    """``int alpha h^2 u^2 / F(h)``.

    Without ``u`` the velocity is reconstructed from the face flux
    (``h u = q``), giving ``alpha * sum q^2 / M`` over faces.
    """
    v = _positive_field(h)
    if u is not None:
        return integrate(h.with_values(p.alpha * v**2 * u.values**2 / p.mobility.F(v)))
    q = lubrication_face_flux(h, p)
    a, b = face_pairs(h)
    M = p.mobility.entropic_mean(a, b)
    return p.alpha * integrate_faces(h.grid, q * q / M)


def sw_viscous_rate(h: ScalarField, u: ScalarField, p: ShallowWaterParams) -> float:
    """``eps * viscous_coeff * int h (d_x u)^2``."""
    v = _positive_field(h)
    if u.staggered:
        du = operators(h.grid).div @ u.values[: h.grid.n_faces]
    else:
            du = dx(u).values
    return p.eps * p.viscous_coeff * integrate(h.with_values(v * du * du))


def sw_drag_coefficient(hf: np.ndarray, p: ShallowWaterParams) -> np.ndarray:
    """kappa with ``alpha h^2 u / F(h) = kappa * (h u)``."""
    return p.alpha * hf / p.mobility.F(hf)


def sw_drag_rate(h: ScalarField, u: ScalarField, p: ShallowWaterParams) -> float:
    """``int alpha h^2 u^2 / F(h)``."""
    v = _positive_field(h)
    if u.staggered:
        hf, uf = _staggered_parts(h, u, p)
        return integrate_faces(h.grid, sw_drag_coefficient(hf, p) * hf * uf**2)
    return integrate(h.with_values(p.alpha * v**2 * u.values**2 / p.mobility.F(v)))


def energy_dissipation_rate_sw(h: ScalarField, u: ScalarField, p: ShallowWaterParams) -> float:
    """Viscous plus drag dissipation of the shallow-water energy."""
    return sw_viscous_rate(h, u, p) + sw_drag_rate(h, u, p)


def limit_bf_rate(h: ScalarField, p: ShallowWaterParams, pressure_grad: np.ndarray | None = None) -> float:
    """``(1/alpha) [int h^(beta-1) (d_x h)^2/Fr^2 + capillary * int (d_xx h)^2]``.

    This is the BF dissipation of the lubrication limit (``m = beta + n``).
    The pressure part is ``sum (d_x log h) * (h_face d_x Pi'(h))`` over faces,
    which for the power law equals ``(d_x log h)(d_x P(h))``.  A custom face
    pressure force ``h_face * d_x(mu_p)`` may be passed (nonlocal pressure).
    """
    v = _positive_field(h)
    ops = operators(h.grid)
    glog = face_diff(h.with_values(np.log(v)))
    if pressure_grad is None:
        pressure_grad = face_diff(h.with_values(p.flux_pressure(v)))
    lap = laplacian(h.grid, v)
    return (
        integrate_faces(h.grid, glog * pressure_grad)
        + p.capillary_coeff * integrate(h.with_values(lap * lap))
    ) / p.alpha


def bd_specific_rate(h: ScalarField, p: ShallowWaterParams, pressure_grad: np.ndarray | None = None) -> float:
    """``viscous_coeff * [int h^(beta-1) (d_x h)^2/Fr^2 + capillary * int (d_xx h)^2]``."""
    return p.viscous_coeff * p.alpha * limit_bf_rate(h, p, pressure_grad)


def term_x_rate(h: ScalarField, u: ScalarField, p) -> float:
    """``int h u (d_x h) / F(h)`` as ``sum m_face * (g0(h_R) - g0(h_L)) / dx``."""
    v = _positive_field(h)
    gh = h.with_values(g0(v, p.mobility, p.cap_A))
    if u.staggered:
        hf, uf = _staggered_parts(h, u, p)
        return integrate_faces(h.grid, hf * uf * face_diff(gh))
    return integrate(h.with_values(v * u.values * dx(h).values / p.mobility.F(v)))


__all__ = [
    "RAW",
    "ENERGY_COMBINED",
    "MobilitySpec",
    "energy_lubrication",
    "energy_shallow_water",
    "bd_velocity",
    "bd_entropy",
    "bf_entropy",
    "bf_dissipation_rate",
    "energy_dissipation_rate_lub",
    "energy_dissipation_rate_sw",
    "sw_viscous_rate",
    "sw_drag_rate",
    "bd_specific_rate",
    "limit_bf_rate",
    "term_x_rate",
    "lubrication_face_flux",
]
