"""Implicit conservative solver for the thin-film (lubrication) equation.

    h_t + d_x( F(h) h_xxx / (alpha We) - D(h) h_x / (alpha Fr^2) ) = 0

on a periodic grid.  The face flux uses the entropic mobility mean
``M = dh / dg0(h)`` so that the discrete BF entropy identity telescopes, and
the arithmetic mean for ``D``.  Time stepping is backward Euler solved by
damped Newton with an analytic sparse Jacobian; the step size adapts on
Newton failure or loss of positivity.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, DomainError, StepFailure
from .functionals import (
    bf_dissipation_rate,
    bf_entropy,
    drift_face,
    energy_dissipation_rate_lub,
    energy_lubrication,
    lubrication_face_flux,
)
from .grid import Grid1D, ScalarField, face_pairs, integrate, operators
from .ledger import BalanceLedger, BalanceTracker, Sample
from .params import LubricationParams

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeStepper:
    """Step-size controller settings.

    After an accepted step ``dt`` grows by ``growth`` up to ``dt_max``.  With
    ``ramp_time`` set, the nominal step instead follows the deterministic
    schedule ``dt_init * (1 + t / ramp_time)`` capped at ``dt_max``; this keeps
    every step proportional to ``dt_init`` for refinement studies.
    """

    dt_init: float = 1e-4
    dt_min: float = 1e-12
    dt_max: float = 1e-2
    newton_tol: float = 1e-12
    newton_max_iter: int = 25
    safety: float = 0.5
    growth: float = 1.25
    ramp_time: float | None = None

    def __post_init__(self):
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ConfigurationError("time stepper needs 0 < dt_min <= dt_init <= dt_max")
        if not self.newton_tol > 0:
            raise ConfigurationError("newton_tol must be positive")
        if not 0 < self.safety < 1:
            raise ConfigurationError("safety must lie in (0, 1)")
        if self.growth < 1:
            raise ConfigurationError("growth must be >= 1")
        if int(self.newton_max_iter) < 1:
            raise ConfigurationError("newton_max_iter must be >= 1")
        if self.ramp_time is not None and not self.ramp_time > 0:
            raise ConfigurationError("ramp_time must be positive")

    def nominal(self, t: float, previous: float | None) -> float:
        if self.ramp_time is not None:
            return min(self.dt_max, self.dt_init * (1.0 + t / self.ramp_time))
        if previous is None:
            return self.dt_init
        return min(self.dt_max, previous * self.growth)

    def scaled(self, factor: float) -> "TimeStepper":
        """All step sizes multiplied by ``factor`` (used for refinement ladders)."""
        return replace(
            self,
            dt_init=self.dt_init * factor,
            dt_min=min(self.dt_min, self.dt_init * factor),
            dt_max=self.dt_max * factor,
        )


@dataclass
class LubricationState:
    time: float
    h: ScalarField


class NewtonFailure(Exception):
    def __init__(self, history, min_h):
        super().__init__("Newton iteration failed")
        self.history = history
        self.min_h = min_h


# -- generic conservative implicit update ------------------------------------

STALL_TOL = 1e-6


def newton_solve(
    h_old: np.ndarray,
    dt: float,
    flux: Callable[[np.ndarray], tuple[np.ndarray, object]],
    div,
    tol: float,
    max_iter: int,
    source: np.ndarray | None = None,
    assembler: "FacewiseJacobian | None" = None,
) -> tuple[np.ndarray, list[float]]:
    """Solve ``h - h_old + dt * div q(h) = dt * source`` by damped Newton.

    ``flux(h)`` returns the face flux and either its Jacobian (dense array)
    or, with ``assembler`` given, the stacked face weights it assembles from.
    Convergence is declared on the size of the Newton update, relative to
    ``max |h_old|``.  Both residual and update have a roundoff floor that
    grows like ``dt / dx^4``; once the update stops contracting while already
    below ``STALL_TOL`` the iterate is accepted as converged to that floor.
    """
    h = h_old.copy()
    n = h.size
    scale = max(1.0, float(np.max(np.abs(h_old))))
    history: list[float] = []
    previous = math.inf
    for _ in range(max_iter):
        q, dq = flux(h)
        R = h - h_old + dt * (div @ q)
        if source is not None:
            R -= dt * source
        history.append(float(np.max(np.abs(R))))
        if assembler is not None:
            delta = spla.splu(assembler.assemble(dt, dq)).solve(-R)
        else:
            J = np.eye(n) + dt * (div @ dq)
            delta = np.linalg.solve(J, -R)
        if not np.all(np.isfinite(delta)):
            raise NewtonFailure(history, float(h.min()))
        lam = 1.0
        neg = delta < 0
        if np.any(neg):
            lam = min(1.0, 0.5 * float(np.min(h[neg] / -delta[neg])))
        h = h + lam * delta
        size = float(np.max(np.abs(delta)))
        if lam == 1.0 and (
            size <= tol * scale or (size <= STALL_TOL * scale and size > 0.25 * previous)
        ):
            return h, history
        previous = size if lam == 1.0 else math.inf
    raise NewtonFailure(history, float(h.min()))


# -- lubrication flux and its Jacobian ----------------------------------------


def lubrication_flux(h: ScalarField, p: LubricationParams) -> np.ndarray:
    """Face flux of the thin-film equation (length ``grid.n_faces``)."""
    if np.any(h.values <= 0):
        raise DomainError("lubrication flux needs strictly positive h")
    return lubrication_face_flux(h, p)


class FacewiseJacobian:
    """Fixed-pattern assembly of ``I + dt * div @ sum_k diag(w_k) @ B_k``.

    ``B_k`` are faces x cells stencil matrices and ``w_k`` per-face weights.
    The entries of the result are linear in the stacked weights, so the map
    from weights to the CSR data array is built once and every Newton
    iteration costs a single sparse mat-vec.
    """

    def __init__(self, div: sp.spmatrix, blocks: list[sp.spmatrix]):
        div = sp.csc_matrix(div)
        n = div.shape[0]
        nf = div.shape[1]
        rows, cols, widx, vals = [], [], [], []
        for k, B in enumerate(blocks):
            B = sp.coo_matrix(B)
            for f, j, b in zip(B.row, B.col, B.data):
                lo, hi = div.indptr[f], div.indptr[f + 1]
                for i, d in zip(div.indices[lo:hi], div.data[lo:hi]):
                    rows.append(i)
                    cols.append(j)
                    widx.append(k * nf + f)
                    vals.append(d * b)
        rows = np.concatenate([np.asarray(rows, dtype=np.int64), np.arange(n)])
        cols = np.concatenate([np.asarray(cols, dtype=np.int64), np.arange(n)])
        key = rows * n + cols
        uniq, slot = np.unique(key, return_inverse=True)
        self.n = n
        self._n_weights = len(blocks) * nf
        self._pattern = sp.csr_matrix(
            (np.zeros(uniq.size), (uniq // n, uniq % n)), shape=(n, n)
        )
        self._pattern.sort_indices()
        # CSR data order equals sorted key order for a canonical matrix
        n_terms = len(vals)
        self._map = sp.csr_matrix(
            (np.asarray(vals, dtype=float), (slot[:n_terms], np.asarray(widx, dtype=np.int64))),
            shape=(uniq.size, self._n_weights),
        )
        self._identity = np.zeros(uniq.size)
        self._identity[slot[n_terms:]] = 1.0

    def assemble(self, dt: float, weights: np.ndarray) -> sp.csc_matrix:
        J = self._pattern.copy()
        J.data = self._identity + dt * (self._map @ weights)
        return J.tocsc()

    def flux_derivative(self, weights: np.ndarray, blocks) -> sp.csr_matrix:
        nf = blocks[0].shape[0]
        out = None
        for k, B in enumerate(blocks):
            term = sp.diags(weights[k * nf:(k + 1) * nf]) @ B
            out = term if out is None else out + term
        return out.tocsr()


def flux_with_jacobian(grid: Grid1D, p: LubricationParams):
    """Closure returning ``(q, w)`` for the Newton solver.

    The flux derivative is ``sum_k diag(w_k) @ B_k`` over the stencil blocks
    ``B = (grad @ lap, left, right, grad)``; ``flux.assembler`` turns the
    stacked weights into the Newton matrix.
    """
    ops = operators(grid)
    third_op = (ops.grad @ ops.lap).tocsr()
    blocks = [third_op, ops.left, ops.right, ops.grad]

    def flux(hv: np.ndarray):
        h = ScalarField(grid, hv)
        a, b = face_pairs(h)
        M, dMa, dMb = p.mobility.entropic_mean(a, b, derivatives=True)
        Df, dDa, dDb = drift_face(h, p)
        T = ops.grad @ (ops.div @ (ops.grad @ hv))
        G = ops.grad @ hv
        q = p.capillary * M * T - p.drift * Df * G
        w = np.concatenate(
            [
                p.capillary * M,
                p.capillary * T * dMa - p.drift * G * dDa,
                p.capillary * T * dMb - p.drift * G * dDb,
                -p.drift * Df,
            ]
        )
        return q, w

    flux.assembler = FacewiseJacobian(ops.div, blocks)
    flux.blocks = blocks
    return flux


# -- time stepping ---------------------------------------------------------------


class LubricationSolver:
    """Owns the step-size state of one run.

    ``source(x, t)``, when given, is added to the right-hand side (evaluated
    at the new time level); it exists for manufactured-solution checks.
    """

    def __init__(self, grid: Grid1D, p: LubricationParams, ts: TimeStepper, source=None):
        if not grid.periodic:
            raise ConfigurationError("the lubrication solver runs on periodic grids")
        self.grid = grid
        self.p = p
        self.ts = ts
        self.source = source
        self._flux = flux_with_jacobian(grid, p)
        self._div = operators(grid).div
        self._dt_prev: float | None = None
        self.accepted = 0
        self.rejected = 0

    def try_step(self, state: LubricationState, dt: float) -> LubricationState:
        src = None
        if self.source is not None:
            src = np.asarray(self.source(self.grid.x, state.time + dt), dtype=float)
        h_new, _ = newton_solve(
            state.h.values, dt, self._flux, self._div, self.ts.newton_tol, self.ts.newton_max_iter, src,
            assembler=self._flux.assembler,
        )
        if not np.all(h_new > 0):
            raise NewtonFailure([], float(h_new.min()))
        return LubricationState(state.time + dt, ScalarField(self.grid, h_new))

    def step(self, state: LubricationState, t_end: float | None = None) -> tuple[LubricationState, float]:
        """One accepted step; halves ``dt`` on failure down to ``dt_min``."""
        dt = self.ts.nominal(state.time, self._dt_prev)
        if t_end is not None:
            dt = min(dt, t_end - state.time)
        last: NewtonFailure | None = None
        while True:
            try:
                new = self.try_step(state, dt)
            except (NewtonFailure, DomainError) as exc:
                last = exc if isinstance(exc, NewtonFailure) else NewtonFailure([], float("nan"))
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
            f"lubrication step failed at t={state.time:.6g} (dt < dt_min={self.ts.dt_min:g})",
            {
                "newton_residuals": last.history if last else [],
                "min_h": last.min_h if last else float(state.h.values.min()),
                "dt": dt,
                "time": state.time,
            },
        )


def step(state: LubricationState, p: LubricationParams, ts: TimeStepper) -> LubricationState:
    """Single implicit step starting from ``ts.dt_init``."""
    return LubricationSolver(state.h.grid, p, ts).step(state)[0]


def lubrication_sample(p: LubricationParams):
    def evaluate(h: ScalarField) -> Sample:
        return Sample(
            mass=integrate(h),
            energy=energy_lubrication(h, p),
            bf=bf_entropy(h, p),
            min_h=float(h.values.min()),
            rate_energy=energy_dissipation_rate_lub(h, p),
            rate_bf=bf_dissipation_rate(h, p),
        )

    return evaluate


def run(
    h0: ScalarField,
    p: LubricationParams,
    ts: TimeStepper,
    t_end: float,
    cadence: int = 1,
    source=None,
    on_step: Callable[[LubricationState, float], None] | None = None,
) -> tuple[LubricationState, BalanceLedger]:
    """Advance from ``t=0`` to ``t_end`` and return the final state and ledger.

    ``on_step(state, dt)`` is invoked after every accepted step.
    """
    solver = LubricationSolver(h0.grid, p, ts, source)
    state = LubricationState(0.0, h0)
    tracker = BalanceTracker(lubrication_sample(p), cadence)
    tracker.start(0.0, h0)
    while t_end - state.time > 1e-12 * max(1.0, t_end):
        state, dt = solver.step(state, t_end)
        if on_step is not None:
            on_step(state, dt)
        tracker.advance(state.time, dt, state.h)
    log.debug("lubrication run: %d accepted, %d rejected steps", solver.accepted, solver.rejected)
    return state, tracker.finish(state.time)


# -- manufactured solution ---------------------------------------------------------


def manufactured_solution(p: LubricationParams, amplitude: float = 0.1, length: float = 1.0):
    """``h*(x,t) = 1 + amplitude e^{-t} cos(2 pi x / L)`` and the matching source.

    Returns ``(exact(x, t), source(x, t))``.
    """
    k = 2 * math.pi / length
    mob = p.mobility

    def exact(x, t):
        return 1.0 + amplitude * math.exp(-t) * np.cos(k * x)

    def source(x, t):
        a = amplitude * math.exp(-t)
        c, s = np.cos(k * x), np.sin(k * x)
        h = 1.0 + a * c
        hx = -a * k * s
        hxx = -a * k**2 * c
        hxxx = a * k**3 * s
        hxxxx = a * k**4 * c
        ht = -a * c
        dq = p.capillary * (mob.dF(h) * hx * hxxx + mob.F(h) * hxxxx) - p.drift * (
            p.dD(h) * hx * hx + p.D(h) * hxx
        )
        return ht + dq

    return exact, source
