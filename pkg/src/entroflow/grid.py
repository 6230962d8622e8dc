"""Uniform 1D grids, finite-difference operators and quadrature.

Two topologies are supported.  ``periodic`` grids carry nodes at
``x_i = i * spacing``; ``wall`` grids carry cell centres at
``x_i = (i + 1/2) * spacing`` on ``(0, L)`` with no-flux ends.

Face quantities live between neighbouring values: a periodic grid has
``n_cells`` faces (face ``i`` sits between value ``i`` and ``i + 1``, the
last one wrapping around), a wall grid has ``n_cells - 1`` interior faces
(the two boundary faces carry zero flux and are not stored).

The sparse operator matrices returned by :func:`operators` are what the
solvers assemble Jacobians from; the ``ScalarField`` functions are the
user-facing versions of the same stencils.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, DomainError, NumericalFailure
from .mobility import MobilitySpec

PERIODIC = "periodic"
WALL = "wall"


@dataclass(frozen=True)
class Grid1D:
    n_cells: int
    length: float = 1.0
    topology: str = PERIODIC

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise ConfigurationError("n_cells must be an integer >= 8")
        if not (self.length > 0 and np.isfinite(self.length)):
            raise ConfigurationError("length must be positive")
        if self.topology not in (PERIODIC, WALL):
            raise ConfigurationError(f"unknown topology {self.topology!r}")
        object.__setattr__(self, "n_cells", int(self.n_cells))
        object.__setattr__(self, "length", float(self.length))

    @property
    def spacing(self) -> float:
        return self.length / self.n_cells

    @property
    def periodic(self) -> bool:
        return self.topology == PERIODIC

    @property
    def n_faces(self) -> int:
        return self.n_cells if self.periodic else self.n_cells - 1

    @property
    def x(self) -> np.ndarray:
        i = np.arange(self.n_cells, dtype=float)
        if self.periodic:
            return i * self.spacing
        return (i + 0.5) * self.spacing

    @property
    def x_faces(self) -> np.ndarray:
        """Positions of the stored faces."""
        if self.periodic:
            return (np.arange(self.n_cells) + 0.5) * self.spacing
        return np.arange(1, self.n_cells) * self.spacing

    def refined(self, factor: int = 2) -> "Grid1D":
        return Grid1D(self.n_cells * factor, self.length, self.topology)


@dataclass
class ScalarField:
    """Values on a grid.  ``staggered`` fields live on the faces.

    A staggered field always has ``n_cells`` entries; on wall grids the last
    entry is the right boundary face and is held at zero.
    """

    grid: Grid1D
    values: np.ndarray
    staggered: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_cells,):
            raise ConfigurationError(
                f"field has {self.values.shape} values, grid has {self.grid.n_cells} cells"
            )

    @classmethod
    def from_function(cls, grid: Grid1D, fn, staggered: bool = False) -> "ScalarField":
        if staggered:
            x = (np.arange(grid.n_cells) + (0.5 if grid.periodic else 1.0)) * grid.spacing
        else:
            x = grid.x
        return cls(grid, np.asarray(fn(x), dtype=float) * np.ones(grid.n_cells), staggered)

    @property
    def x(self) -> np.ndarray:
        if self.staggered:
            return (np.arange(self.grid.n_cells) + (0.5 if self.grid.periodic else 1.0)) * self.grid.spacing
        return self.grid.x

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values, self.staggered)

    def check_finite(self) -> "ScalarField":
        if not np.all(np.isfinite(self.values)):
            raise NumericalFailure("field contains non-finite values")
        return self

    def __add__(self, other):
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other))

    def __mul__(self, other):
        return self.with_values(self.values * _vals(other))

    __radd__ = __add__
    __rmul__ = __mul__


def _vals(f):
    return f.values if isinstance(f, ScalarField) else f


def _finite(values: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NumericalFailure("non-finite values in operand")
    return values


# -- pointwise stencils on fields -------------------------------------------


def dx(f: ScalarField, neumann: bool = False) -> ScalarField:
    """Second-order central first derivative.

    On wall grids the end values use one-sided second-order stencils, or,
    with ``neumann=True``, a mirrored ghost value (homogeneous Neumann).
    """
    v = _finite(f.values)
    h = f.grid.spacing
    if f.grid.periodic:
        out = (np.roll(v, -1) - np.roll(v, 1)) / (2 * h)
    else:
        out = np.empty_like(v)
        out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
        if neumann:
            out[0] = (v[1] - v[0]) / (2 * h)
            out[-1] = (v[-1] - v[-2]) / (2 * h)
        else:
            out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
            out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    return ScalarField(f.grid, out)


def dxx(f: ScalarField, neumann: bool = False) -> ScalarField:
    """Three-point second derivative (four-point one-sided at wall ends)."""
    v = _finite(f.values)
    h2 = f.grid.spacing ** 2
    if f.grid.periodic:
        out = (np.roll(v, -1) - 2 * v + np.roll(v, 1)) / h2
    else:
        out = np.empty_like(v)
        out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h2
        if neumann:
            out[0] = (v[1] - v[0]) / h2
            out[-1] = (v[-2] - v[-1]) / h2
        else:
            out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h2
            out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h2
    return ScalarField(f.grid, out)


def dxxx(f: ScalarField, neumann: bool = False) -> ScalarField:
    """Third derivative as ``dx(dxx(f))`` with matched stencils."""
    return dx(dxx(f, neumann), neumann)


def integrate(f: ScalarField) -> float:
    """Rectangle rule (periodic nodes) / midpoint rule (wall cells)."""
    return float(f.grid.spacing * np.sum(_finite(f.values)))


def face_diff(f: ScalarField) -> np.ndarray:
    """Two-point gradient ``(f[i+1] - f[i]) / spacing`` on the stored faces."""
    v = _finite(f.values)
    if f.grid.periodic:
        return (np.roll(v, -1) - v) / f.grid.spacing
    return np.diff(v) / f.grid.spacing


def face_pairs(f: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """Left and right neighbour values of every stored face."""
    v = f.values
    if f.grid.periodic:
        return v, np.roll(v, -1)
    return v[:-1], v[1:]


def integrate_faces(grid: Grid1D, face_values: np.ndarray) -> float:
    return float(grid.spacing * np.sum(face_values))


ARITHMETIC = "arithmetic"
ENTROPIC = "entropic"


def face_average(f: ScalarField, rule: str = ARITHMETIC, mobility: MobilitySpec | None = None) -> np.ndarray:
    """Average neighbouring values onto faces.

    ``entropic`` returns ``(h[i+1] - h[i]) / (g0(h[i+1]) - g0(h[i]))`` with
    ``g0' = 1/F``, falling back to ``F(midpoint)`` when the relative jump is
    below ``1e-8``.
    """
    left, right = face_pairs(f)
    if rule == ARITHMETIC:
        return 0.5 * (left + right)
    if rule == ENTROPIC:
        if mobility is None:
            raise ConfigurationError("entropic face average needs a mobility")
        if np.any(f.values <= 0):
            raise DomainError("entropic face average needs strictly positive values")
        return mobility.entropic_mean(left, right)
    raise ConfigurationError(f"unknown face-average rule {rule!r}")


# -- sparse operator matrices ------------------------------------------------


@dataclass(frozen=True)
class Operators:
    """Sparse stencil matrices of a grid.

    ``grad``   faces x cells, two-point gradient
    ``div``    cells x faces, conservative divergence (``-grad.T``)
    ``lap``    cells x cells, ``div @ grad`` (Neumann on wall grids)
    ``left``/``right``  faces x cells selectors of the neighbour values
    """

    grad: sp.csr_matrix
    div: sp.csr_matrix
    lap: sp.csr_matrix
    left: sp.csr_matrix
    right: sp.csr_matrix


def laplacian(grid: Grid1D, values: np.ndarray) -> np.ndarray:
    """``div(grad v)`` applied stencil by stencil; exact zero on constants."""
    ops = operators(grid)
    return ops.div @ (ops.grad @ values)


@functools.lru_cache(maxsize=64)
def operators(grid: Grid1D) -> Operators:
    n = grid.n_cells
    h = grid.spacing
    nf = grid.n_faces
    rows = np.arange(nf)
    lcol = np.arange(nf)
    rcol = (np.arange(nf) + 1) % n
    ones = np.ones(nf)
    left = sp.csr_matrix((ones, (rows, lcol)), shape=(nf, n))
    right = sp.csr_matrix((ones, (rows, rcol)), shape=(nf, n))
    grad = ((right - left) / h).tocsr()
    div = (-grad.T).tocsr()
    lap = (div @ grad).tocsr()
    return Operators(grad, div, lap, left, right)
