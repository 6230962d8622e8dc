"""IMEX solver for the viscous shallow-water system with drag.

    h_t + (h u)_x = 0
    eps [ (h u)_t + (h u^2)_x ] = eps nu (h u_x)_x - h mu_x - alpha h^2 u / F(h)

with ``mu = Pi'(h) - capillary * h_xx`` (power-law pressure) or
``mu = I(h) - capillary * h_xx`` (nonlocal pressure).  Heights live on
cells, velocities and the momentum ``m = h_face * u`` on faces.

One step solves a single linear system for the new momentum.  Advection is
explicit and upwinded; viscosity and drag are implicit; the pressure and
capillary force are implicit through one linearisation of ``mu`` about the
old state (the mass update is substituted into it).  The drag is integrated
with an exponentially fitted inertia coefficient so that the pure relaxation
``eps m' = -kappa m`` is reproduced exactly for any step size, which keeps
the scheme stable and accurate as ``eps -> 0``.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, StepFailure
from .functionals import (
    ENERGY_COMBINED,
    bd_entropy,
    bd_velocity,
    bf_entropy,
    capillary_energy,
    kinetic_energy,
    limit_bf_rate,
    sw_drag_coefficient,
    sw_drag_rate,
    sw_face_height,
    sw_viscous_rate,
    term_x_rate,
)
from .grid import Grid1D, ScalarField, face_diff, integrate, laplacian, operators
from .ledger import BalanceLedger, BalanceTracker, Sample, term_x_audit
from .lubrication import TimeStepper
from .params import NONLOCAL_PRESSURE, ShallowWaterParams

log = logging.getLogger(__name__)

_MAX_FIT = 700.0


@dataclass
class ShallowWaterState:
    """Cell heights ``h`` and staggered face velocities ``u``."""

    time: float
    h: ScalarField
    u: ScalarField

    def __post_init__(self):
        if not self.u.staggered:
            raise ConfigurationError("shallow-water velocity must be a staggered field")


def momentum(state: ShallowWaterState, p: ShallowWaterParams) -> np.ndarray:
    """Face momentum ``h_face * u`` on the stored faces."""
    nf = state.h.grid.n_faces
    return sw_face_height(state.h, p) * state.u.values[:nf]


def velocity_field(grid: Grid1D, face_values: np.ndarray) -> ScalarField:
    """Staggered field from values on the stored faces (wall ends padded with 0)."""
    out = np.zeros(grid.n_cells)
    out[: grid.n_faces] = face_values
    return ScalarField(grid, out, staggered=True)


class _FaceOperator:
    """Fixed-pattern sparse assembly of face x face matrices.

    ``G diag(w) Dv`` is linear in the cell weights ``w``; the map from ``w``
    to the CSR data of the pattern (together with the identity and the
    constant capillary block) is tabulated once per grid.
    """

    def __init__(self, grid: Grid1D):
        ops = operators(grid)
        G = sp.csr_matrix(ops.grad)
        Dv = sp.csr_matrix(ops.div)
        nf = grid.n_faces
        rows, cols, widx, vals = [], [], [], []
        for f in range(nf):
            for k in range(G.indptr[f], G.indptr[f + 1]):
                i, g = G.indices[k], G.data[k]
                lo, hi = Dv.indptr[i], Dv.indptr[i + 1]
                for j, d in zip(Dv.indices[lo:hi], Dv.data[lo:hi]):
                    rows.append(f)
                    cols.append(j)
                    widx.append(i)
                    vals.append(g * d)
        cap = (G @ ops.lap @ Dv).tocoo()
        all_r = np.concatenate([rows, np.arange(nf), cap.row]).astype(np.int64)
        all_c = np.concatenate([cols, np.arange(nf), cap.col]).astype(np.int64)
        key = all_r * nf + all_c
        uniq, slot = np.unique(key, return_inverse=True)
        n1, n2 = len(rows), nf
        self.nf = nf
        self.rows = uniq // nf
        self.cols = uniq % nf
        self._pattern = sp.csr_matrix((np.zeros(uniq.size), (self.rows, self.cols)), shape=(nf, nf))
        self._map = sp.csr_matrix(
            (np.asarray(vals, dtype=float), (slot[:n1], np.asarray(widx, dtype=np.int64))),
            shape=(uniq.size, grid.n_cells),
        )
        self._diag = slot[n1:n1 + n2]
        self._cap = np.zeros(uniq.size)
        np.add.at(self._cap, slot[n1 + n2:], cap.data)

    def assemble(self, diag: np.ndarray, visc_w: np.ndarray, visc_col: np.ndarray,
                 press_w: np.ndarray, press_row: np.ndarray, cap_coeff: float) -> sp.csr_matrix:
        """``diag(diag) + G diag(visc_w) Dv diag(visc_col)
        + diag(press_row) (G diag(press_w) Dv + cap_coeff G lap Dv)``."""
        data = np.zeros(self.rows.size)
        data[self._diag] += diag
        data += (self._map @ visc_w) * visc_col[self.cols]
        data += ((self._map @ press_w) + cap_coeff * self._cap) * press_row[self.rows]
        A = self._pattern.copy()
        A.data = data
        return A


@functools.lru_cache(maxsize=64)
def _cell_face_selectors(grid: Grid1D) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """(left face, right face) selectors, cells x faces; wall faces read as 0."""
    ops = operators(grid)
    return ops.right.T.tocsr(), ops.left.T.tocsr()


def _advection(grid: Grid1D, m: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Face values of ``d_x(m u)`` with the cell momentum flux upwinded."""
    left, right = _cell_face_selectors(grid)
    mc = 0.5 * (left @ m + right @ m)
    flux = mc * np.where(mc > 0, left @ u, right @ u)
    return operators(grid).grad @ flux


def _fitted_inertia(eps: float, kappa: np.ndarray, dt: float) -> np.ndarray:
    """``eps * x / expm1(x)`` with ``x = kappa dt / eps``."""
    x = np.minimum(kappa * dt / eps, _MAX_FIT)
    out = np.ones_like(x)
    big = x > 1e-12
    out[big] = x[big] / np.expm1(x[big])
    return eps * out


class ShallowWaterSolver:
    """Step controller for one shallow-water run.

    ``kernel`` (a :class:`~entroflow.electrified.NonlocalKernel`) is required
    for the nonlocal pressure.  The step is the smaller of the stepper's
    nominal step and the CFL step ``safety * dx / max(|u| + c)`` with the
    gravity-wave speed ``c = sqrt(h^beta / (eps Fr^2))`` (``c = 0`` for the
    nonlocal pressure, which is treated implicitly).
    """

    def __init__(self, grid: Grid1D, p: ShallowWaterParams, ts: TimeStepper, kernel=None):
        self.grid = grid
        self.p = p
        self.ts = ts
        self.is_nonlocal = p.pressure == NONLOCAL_PRESSURE
        if self.is_nonlocal:
            if kernel is None:
                raise ConfigurationError("nonlocal pressure needs a kernel")
            if grid.periodic:
                raise ConfigurationError("the nonlocal pressure lives on a wall grid")
        self.kernel = kernel
        self.ops = operators(grid)
        self._faces = _FaceOperator(grid)
        if self.is_nonlocal:
            G = self.ops.grad.toarray()
            self._g_i_dv = G @ kernel.matrix @ self.ops.div.toarray()
        self._dt_prev: float | None = None
        self.accepted = 0
        self.rejected = 0

    # -- pieces ------------------------------------------------------------

    def chemical_potential(self, hv: np.ndarray) -> np.ndarray:
        p = self.p
        cap = -p.capillary_coeff * laplacian(self.grid, hv)
        if self.is_nonlocal:
            return self.kernel.apply(hv) + cap
        return p.chemical_pressure(hv) + cap

    def pressure_potential(self, hv: np.ndarray) -> np.ndarray:
        if self.is_nonlocal:
            return self.kernel.apply(hv)
        return self.p.chemical_pressure(hv)

    def cfl_dt(self, state: ShallowWaterState) -> float:
        p = self.p
        speed = float(np.max(np.abs(state.u.values)))
        if not self.is_nonlocal:
            speed += float(np.sqrt(np.max(state.h.values) ** p.beta / (p.eps * p.fr**2)))
        if speed == 0.0:
            return math.inf
        return self.ts.safety * self.grid.spacing / speed

    def try_step(self, state: ShallowWaterState, dt: float) -> ShallowWaterState:
        p, ops, grid = self.p, self.ops, self.grid
        nf = grid.n_faces
        hv = state.h.values
        hf = sw_face_height(state.h, p)
        uf = state.u.values[:nf]
        m = hf * uf
        kappa = sw_drag_coefficient(hf, p)
        eps_eff = _fitted_inertia(p.eps, kappa, dt)
        mu = self.chemical_potential(hv)

        rhs = eps_eff * m - dt * p.eps * _advection(grid, m, uf) - dt * hf * (ops.grad @ mu)
        visc = -dt * p.eps * p.viscous_coeff
        if self.is_nonlocal:
            press_w = np.zeros(grid.n_cells)
        else:
            press_w = p.chemical_pressure_prime(hv)
        A = self._faces.assemble(
            diag=eps_eff + dt * kappa,
            visc_w=visc * hv,
            visc_col=1.0 / hf,
            press_w=-dt * dt * press_w,
            press_row=hf,
            cap_coeff=dt * dt * p.capillary_coeff,
        )
        if self.is_nonlocal:
            dense = A.toarray() - dt * dt * hf[:, None] * self._g_i_dv
            m_new = np.linalg.solve(dense, rhs)
        else:
            m_new = spla.splu(A.tocsc()).solve(rhs)
        h_new = hv - dt * (ops.div @ m_new)
        if not (np.all(np.isfinite(h_new)) and np.all(h_new > 0)):
            raise _Rejected(float(np.nanmin(h_new)) if np.any(np.isfinite(h_new)) else math.nan)
        h_field = ScalarField(grid, h_new)
        u_new = m_new / sw_face_height(h_field, p)
        return ShallowWaterState(state.time + dt, h_field, velocity_field(grid, u_new))

    def step(self, state: ShallowWaterState, t_end: float | None = None) -> tuple[ShallowWaterState, float]:
        """One accepted step; halves ``dt`` on positivity loss down to ``dt_min``."""
        cfl = self.cfl_dt(state)
        dt = min(self.ts.nominal(state.time, self._dt_prev), cfl)
        if t_end is not None:
            dt = min(dt, t_end - state.time)
        min_h = float(state.h.values.min())
        while True:
            try:
                new = self.try_step(state, dt)
            except _Rejected as exc:
                min_h = exc.min_h
                self.rejected += 1
                dt *= 0.5
                if dt < self.ts.dt_min:
                    break
                continue
            self.accepted += 1
            if t_end is None or state.time + dt < t_end:
                self._dt_prev = dt
            return new, dt
        raise StepFailure(
            f"shallow-water step failed at t={state.time:.6g} (dt < dt_min={self.ts.dt_min:g})",
            {"min_h": min_h, "dt": dt, "cfl_dt": cfl, "time": state.time},
        )


class _Rejected(Exception):
    def __init__(self, min_h: float):
        super().__init__("positivity lost")
        self.min_h = min_h


def sw_step(state: ShallowWaterState, p: ShallowWaterParams, ts: TimeStepper, kernel=None) -> ShallowWaterState:
    """Single IMEX step starting from ``ts.dt_init`` (CFL-limited)."""
    return ShallowWaterSolver(state.h.grid, p, ts, kernel).step(state)[0]


# -- ledger sampling ---------------------------------------------------------


def sw_sample(p: ShallowWaterParams, kernel=None) -> Callable[[ShallowWaterState], Sample]:
    """Ledger sampler: energy, BD entropies, BF entropy and their rates.

    ``rate_bf`` is the BF dissipation of the lubrication limit, so the BF
    column of a shallow-water ledger measures how far the run is from the
    limiting BF identity.
    """
    nonlocal_p = p.pressure == NONLOCAL_PRESSURE

    def potential(h: ScalarField) -> float:
        if nonlocal_p:
            return 0.5 * integrate(h.with_values(h.values * kernel.apply(h.values)))
        return integrate(h.with_values(p.potential(h.values)))

    def pressure_grad(h: ScalarField):
        if nonlocal_p:
            hf = sw_face_height(h, p)
            return hf * face_diff(h.with_values(kernel.apply(h.values)))
        return None

    def evaluate(state: ShallowWaterState) -> Sample:
        h, u = state.h, state.u
        grad = pressure_grad(h)
        cap = capillary_energy(h, p.capillary_coeff)
        pot = potential(h)
        energy = kinetic_energy(h, u, p) + pot + cap
        v = bd_velocity(h, u, p)
        bd_raw = kinetic_energy(h, v, p) + pot + cap
        drag = sw_drag_rate(h, u, p)
        lim = limit_bf_rate(h, p, grad)
        return Sample(
            mass=integrate(h),
            energy=energy,
            bf=bf_entropy(h, p),
            min_h=float(h.values.min()),
            rate_energy=sw_viscous_rate(h, u, p) + drag,
            rate_bf=lim,
            bd_raw=bd_raw,
            bd_combined=bd_entropy(h, u, p, ENERGY_COMBINED),
            rate_bd=drag + p.viscous_coeff * p.alpha * lim,
            rate_x=term_x_rate(h, u, p),
        )

    return evaluate


def sw_run(
    h0: ScalarField,
    p: ShallowWaterParams,
    ts: TimeStepper,
    t_end: float,
    m0: np.ndarray | None = None,
    cadence: int = 1,
    kernel=None,
    on_step: Callable[[ShallowWaterState, float], None] | None = None,
) -> tuple[ShallowWaterState, BalanceLedger]:
    """Advance from rest (or from face momentum ``m0``) to ``t_end``.

    The ledger's BD residual uses ``viscous_coeff * alpha * (BF(t) - BF(0))``
    for the time-integrated term X.
    """
    grid = h0.grid
    nf = grid.n_faces
    if m0 is None:
        u0 = np.zeros(nf)
    else:
        m0 = np.asarray(m0, dtype=float)
        if m0.shape != (nf,):
            raise ConfigurationError(f"initial momentum needs {nf} face values")
        u0 = m0 / sw_face_height(h0, p)
    state = ShallowWaterState(0.0, h0, velocity_field(grid, u0))
    solver = ShallowWaterSolver(grid, p, ts, kernel)
    tracker = BalanceTracker(sw_sample(p, kernel), cadence, bd_x_coeff=p.viscous_coeff * p.alpha)
    tracker.start(0.0, state)
    while t_end - state.time > 1e-12 * max(1.0, t_end):
        state, dt = solver.step(state, t_end)
        if on_step is not None:
            on_step(state, dt)
        tracker.advance(state.time, dt, state)
    log.debug("shallow-water run: %d accepted, %d rejected steps", solver.accepted, solver.rejected)
    return state, tracker.finish(state.time)


def prepared_momentum(h: ScalarField, p: ShallowWaterParams, kernel=None) -> np.ndarray:
    """Face momentum of the quasi-static balance ``kappa m = -h_face d_x mu``.

    This is the lubrication (gradient-flow) velocity; starting from it
    suppresses the initial layer of width ``eps``.
    """
    solver = ShallowWaterSolver(h.grid, p, TimeStepper(), kernel)
    hf = sw_face_height(h, p)
    mu = solver.chemical_potential(h.values)
    return -hf * (operators(h.grid).grad @ mu) / sw_drag_coefficient(hf, p)


def term_X_audit(ledger: BalanceLedger) -> np.ndarray:
    """Per-interval residual of ``Delta int G0(h) - int X dt`` (see :func:`term_x_audit`)."""
    return term_x_audit(ledger)


__all__ = [
    "ShallowWaterState",
    "ShallowWaterSolver",
    "momentum",
    "prepared_momentum",
    "sw_step",
    "sw_run",
    "sw_sample",
    "term_X_audit",
]
