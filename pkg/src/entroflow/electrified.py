"""Nonlocal operator of the electrified thin film and the two solvers using it.

The kernel on ``(0, 1)``

    nu(x, y) = pi/2 * ( 1/(1 - cos pi(x-y)) + 1/(1 - cos pi(x+y)) )

is the kernel of ``1/(pi z^2)`` summed over the even reflection and the
2-periodic images, so ``I(h) = int (h(y) - h(x)) nu(x, y) dy`` acts as
``-(-Laplacian)^(1/2)`` with homogeneous Neumann conditions.

Discretisation on cell centres: off-diagonal weights ``dx * nu(x_i, x_j)``
plus a local correction for the excluded self cell.  Expanding
``h(y) - h(x)`` to second order over ``|y - x| < dx/2`` gives
``h''(x) dx / (2 pi)``; with the three-point second difference this adds
``1 / (2 pi dx)`` to the weight of each neighbour.  At a wall the missing
neighbour is the mirror image of the cell itself and contributes nothing.
The resulting matrix is a circulant on the even extension, hence exactly
diagonalised by the type-II discrete cosine transform.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from .errors import ConfigurationError, DomainError, StepFailure
from .functionals import bf_entropy, capillary_energy
from .grid import WALL, Grid1D, ScalarField, face_diff, face_pairs, integrate, integrate_faces, laplacian, operators
from .ledger import BalanceLedger, BalanceTracker, Sample
from .lubrication import LubricationState, NewtonFailure, TimeStepper, newton_solve
from .mobility import MobilitySpec
from .params import NONLOCAL_PRESSURE, LubricationParams, ShallowWaterParams
from .shallow_water import ShallowWaterState, ShallowWaterSolver, sw_run

log = logging.getLogger(__name__)

ELECTRIFIED_MOBILITY = MobilitySpec.power_law(3.0)


def nu(x, y):
    """Kernel value; ``x``, ``y`` in ``(0, 1)`` with ``x != y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any((x <= 0) | (x >= 1) | (y <= 0) | (y >= 1)):
        raise DomainError("nu is defined for x, y in the open interval (0, 1)")
    s_minus = np.sin(0.5 * np.pi * (x - y))
    s_plus = np.sin(0.5 * np.pi * (x + y))
    if np.any(s_minus == 0) or np.any(s_plus == 0):
        raise DomainError("nu is singular on the diagonal x = y")
    out = 0.25 * np.pi * (1.0 / s_minus**2 + 1.0 / s_plus**2)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NonlocalKernel:
    """Quadrature weights of ``I`` on a unit wall grid.

    ``weights[i, j]`` multiplies ``h_j - h_i``; ``matrix`` is the linear
    operator ``h -> I(h)`` (weights minus their row sums on the diagonal).
    """

    grid: Grid1D
    weights: np.ndarray = field(repr=False)
    matrix: np.ndarray = field(repr=False)

    def apply(self, h: np.ndarray) -> np.ndarray:
        """Difference form ``sum_j W_ij (h_j - h_i)``; exact zero on constants."""
        h = np.asarray(h, dtype=float)
        return np.einsum("ij,ij->i", self.weights, h[None, :] - h[:, None])

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.weights - self.weights.T)))


def _check_grid(grid: Grid1D):
    if grid.topology != WALL or grid.length != 1.0:
        raise ConfigurationError("the nonlocal operator lives on the unit wall grid")


@functools.lru_cache(maxsize=16)
def kernel(grid: Grid1D) -> NonlocalKernel:
    """Dense kernel for ``grid`` (cached; the arrays are read-only)."""
    _check_grid(grid)
    n = grid.n_cells
    dx = grid.spacing
    x = grid.x
    W = np.zeros((n, n))
    off = ~np.eye(n, dtype=bool)
    X, Y = np.meshgrid(x, x, indexing="ij")
    W[off] = dx * nu(X[off], Y[off])
    idx = np.arange(n - 1)
    W[idx, idx + 1] += 1.0 / (2.0 * math.pi * dx)
    W[idx + 1, idx] += 1.0 / (2.0 * math.pi * dx)
    M = W - np.diag(W.sum(axis=1))
    W.setflags(write=False)
    M.setflags(write=False)
    return NonlocalKernel(grid, W, M)


def apply_I(h: ScalarField, k: NonlocalKernel | None = None) -> ScalarField:
    """``I(h)`` at the cell centres."""
    h.check_finite()
    k = kernel(h.grid) if k is None else k
    return h.with_values(k.apply(h.values))


# -- cosine-spectral route ----------------------------------------------------


def cosine_modes(grid: Grid1D) -> np.ndarray:
    """Rows are ``cos(k pi x_i)``, ``k = 0 .. n-1``."""
    k = np.arange(grid.n_cells)[:, None]
    return np.cos(k * np.pi * grid.x[None, :])


def measure_eigenvalues(k: NonlocalKernel) -> np.ndarray:
    """Rayleigh quotients of ``apply_I`` on the discrete cosine modes."""
    modes = cosine_modes(k.grid)
    applied = modes @ k.matrix.T
    return np.einsum("ki,ki->k", applied, modes) / np.einsum("ki,ki->k", modes, modes)


def spectral_apply_I(h: np.ndarray, eigenvalues: np.ndarray) -> np.ndarray:
    """Expand in cosines, scale mode ``k`` by ``eigenvalues[k]``, resum."""
    coeffs = fft.dct(np.asarray(h, dtype=float), type=2, norm="ortho")
    return fft.idct(coeffs * eigenvalues, type=2, norm="ortho")


def kernel_audit(k: NonlocalKernel, tol: float = 1e-12) -> dict:
    """Symmetry, positivity and definiteness checks of a kernel.

    ``passed`` requires symmetric non-negative weights, exact annihilation
    of constants and a negative semidefinite operator matrix (largest
    eigenvalue at most ``tol`` times the spectral radius).
    """
    W = k.weights
    off = ~np.eye(W.shape[0], dtype=bool)
    eig = np.linalg.eigvalsh(0.5 * (k.matrix + k.matrix.T))
    radius = float(np.max(np.abs(eig)))
    audit = {
        "n_cells": k.grid.n_cells,
        "symmetry_defect": k.symmetry_defect(),
        "min_offdiagonal_weight": float(np.min(W[off])),
        "constant_residual": float(np.max(np.abs(k.apply(np.ones(W.shape[0]))))),
        "max_eigenvalue": float(eig[-1]),
        "min_eigenvalue": float(eig[0]),
        "spectral_radius": radius,
    }
    audit["passed"] = bool(
        audit["symmetry_defect"] <= tol
        and audit["min_offdiagonal_weight"] >= 0
        and audit["constant_residual"] <= tol
        and audit["max_eigenvalue"] <= tol * radius
    )
    return audit


# -- electrified thin film -------------------------------------------------------


def electrified_pressure(hv: np.ndarray, k: NonlocalKernel) -> np.ndarray:
    """``p = d_xx h - I(h)`` with Neumann second differences."""
    return laplacian(k.grid, hv) - k.apply(hv)


def electrified_flux(h: ScalarField, k: NonlocalKernel | None = None) -> np.ndarray:
    """Interior-face flux ``M d_x p`` (``M`` the entropic mean of ``h^3``)."""
    k = kernel(h.grid) if k is None else k
    a, b = face_pairs(h)
    M = ELECTRIFIED_MOBILITY.entropic_mean(a, b)
    return M * face_diff(h.with_values(electrified_pressure(h.values, k)))


def _flux_with_jacobian(k: NonlocalKernel):
    ops = operators(k.grid)
    grad = ops.grad.toarray()
    P = ops.lap.toarray() - k.matrix
    GP = grad @ P
    left = ops.left.toarray()
    right = ops.right.toarray()

    def flux(hv: np.ndarray):
        a, b = hv[:-1], hv[1:]
        M, dMa, dMb = ELECTRIFIED_MOBILITY.entropic_mean(a, b, derivatives=True)
        gp = ops.grad @ electrified_pressure(hv, k)
        q = M * gp
        dq = (gp * dMa)[:, None] * left + (gp * dMb)[:, None] * right + M[:, None] * GP
        return q, dq

    return flux


def nonlocal_energy(h: ScalarField, k: NonlocalKernel | None = None) -> float:
    """``1/2 int (d_x h)^2 - 1/2 int I(h) h``."""
    k = kernel(h.grid) if k is None else k
    return capillary_energy(h, 1.0) - 0.5 * integrate(h.with_values(h.values * k.apply(h.values)))


def electrified_lyapunov(h: ScalarField, k: NonlocalKernel | None = None) -> float:
    """``1/2 int (d_x h)^2 + 1/2 int I(h) h``.

    The flux is ``M d_x p`` with ``p = -(variational derivative of this
    functional)``, so it decays at exactly the rate ``sum M (d_x p)^2`` for
    the time-continuous flow.
    """
    k = kernel(h.grid) if k is None else k
    return capillary_energy(h, 1.0) + 0.5 * integrate(h.with_values(h.values * k.apply(h.values)))


def electrified_sample(k: NonlocalKernel, cap_A: float):
    bf_params = LubricationParams(mobility=ELECTRIFIED_MOBILITY, m=None, cap_A=cap_A)

    def evaluate(h: ScalarField) -> Sample:
        hv = h.values
        q = electrified_flux(h, k)
        a, b = face_pairs(h)
        M = ELECTRIFIED_MOBILITY.entropic_mean(a, b)
        lh = laplacian(k.grid, hv)
        return Sample(
            mass=integrate(h),
            energy=electrified_lyapunov(h, k),
            bf=bf_entropy(h, bf_params),
            min_h=float(hv.min()),
            rate_energy=integrate_faces(h.grid, q * q / M),
            rate_bf=integrate(h.with_values(lh * lh - lh * k.apply(hv))),
        )

    return evaluate


class ElectrifiedSolver:
    """Backward Euler with Newton for the electrified film on the unit wall grid."""

    def __init__(self, grid: Grid1D, ts: TimeStepper):
        self.grid = grid
        self.ts = ts
        self.kernel = kernel(grid)
        self._flux = _flux_with_jacobian(self.kernel)
        self._div = operators(grid).div
        self._dt_prev: float | None = None
        self.accepted = 0
        self.rejected = 0

    def step(self, state: LubricationState, t_end: float | None = None) -> tuple[LubricationState, float]:
        dt = self.ts.nominal(state.time, self._dt_prev)
        if t_end is not None:
            dt = min(dt, t_end - state.time)
        last = NewtonFailure([], float(state.h.values.min()))
        while True:
            try:
                h_new, _ = newton_solve(
                    state.h.values, dt, self._flux, self._div, self.ts.newton_tol, self.ts.newton_max_iter
                )
                if not np.all(h_new > 0):
                    raise NewtonFailure([], float(h_new.min()))
            except (NewtonFailure, DomainError) as exc:
                if isinstance(exc, NewtonFailure):
                    last = exc
                self.rejected += 1
                dt *= 0.5
                if dt < self.ts.dt_min:
                    break
                continue
            self.accepted += 1
            if t_end is None or state.time + dt < t_end:
                self._dt_prev = dt
            return LubricationState(state.time + dt, ScalarField(self.grid, h_new)), dt
        raise StepFailure(
            f"electrified step failed at t={state.time:.6g} (dt < dt_min={self.ts.dt_min:g})",
            {"newton_residuals": last.history, "min_h": last.min_h, "dt": dt, "time": state.time},
        )


def electrified_step(state: LubricationState, ts: TimeStepper) -> LubricationState:
    """Single implicit step starting from ``ts.dt_init``."""
    _check_grid(state.h.grid)
    return ElectrifiedSolver(state.h.grid, ts).step(state)[0]


def electrified_run(
    h0: ScalarField,
    ts: TimeStepper,
    t_end: float,
    cap_A: float = 2.0,
    cadence: int = 1,
    on_step=None,
    max_steps: int | None = None,
) -> tuple[LubricationState, BalanceLedger]:
    """Run to ``t_end`` (or ``max_steps`` accepted steps).

    The ledger's energy column is the Lyapunov functional
    :func:`electrified_lyapunov` and its BF column uses ``F = h^3``.
    """
    _check_grid(h0.grid)
    solver = ElectrifiedSolver(h0.grid, ts)
    state = LubricationState(0.0, h0)
    tracker = BalanceTracker(electrified_sample(solver.kernel, cap_A), cadence)
    tracker.start(0.0, h0)
    steps = 0
    while t_end - state.time > 1e-12 * max(1.0, t_end):
        if max_steps is not None and steps >= max_steps:
            break
        state, dt = solver.step(state, t_end)
        steps += 1
        if on_step is not None:
            on_step(state, dt)
        tracker.advance(state.time, dt, state.h)
    return state, tracker.finish(state.time)


# -- nonlocal shallow water ---------------------------------------------------------


def swnl_params(alpha: float = 1.0, eps: float = 1e-2, cap_A: float = 2.0, **kw) -> ShallowWaterParams:
    """Coefficients of the nonlocal shallow-water system: viscous and capillary
    coefficients 1, drag ``alpha u / h`` (weight ``F = h^3``)."""
    kw.setdefault("viscous_coeff", 1.0)
    kw.setdefault("capillary_coeff", 1.0)
    return ShallowWaterParams(
        alpha=alpha,
        eps=eps,
        mobility=ELECTRIFIED_MOBILITY,
        cap_A=cap_A,
        pressure=NONLOCAL_PRESSURE,
        **kw,
    )


def swnl_step(state: ShallowWaterState, p: ShallowWaterParams, ts: TimeStepper) -> ShallowWaterState:
    """One step of the nonlocal shallow-water system (``u = 0`` and ``h_x = 0`` at the walls)."""
    _check_grid(state.h.grid)
    if p.pressure != NONLOCAL_PRESSURE:
        raise ConfigurationError("swnl_step needs pressure='nonlocal'")
    return ShallowWaterSolver(state.h.grid, p, ts, kernel(state.h.grid)).step(state)[0]


def swnl_run(h0: ScalarField, p: ShallowWaterParams, ts: TimeStepper, t_end: float, **kw):
    _check_grid(h0.grid)
    return sw_run(h0, p, ts, t_end, kernel=kernel(h0.grid), **kw)
