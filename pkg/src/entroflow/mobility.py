"""Mobility laws F(h) and the Bernis-Friedman primitives g0 and G0.

``g0(s) = -int_s^A dr / F(r)`` and ``G0(s) = -int_s^A g0(r) dr`` so that
``G0' = g0`` and ``G0'' = 1 / F``.  Closed forms are used for every
supported mobility; :func:`g_eps_quad` and :func:`G_eps_quad` evaluate the
regularised versions (``F + eps`` in the denominator) by adaptive quadrature
and double as the independent oracle for the closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, DomainError

POWER_LAW = "power_law"
QUADRATIC_CUBIC = "quadratic_cubic"

# relative jump below which the entropic face mean falls back to F(midpoint)
DELTA_SWITCH = 1e-8
# relative jump below which the entropic mean is evaluated by Gauss-Legendre
# (the closed-form difference quotient loses digits to cancellation there)
_GL_SWITCH = 0.05
_GL_T, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_T = 0.5 * (_GL_T + 1.0)
_GL_W = 0.5 * _GL_W


def _check_positive(s, what="s"):
    arr = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} must be finite")
    if np.any(arr <= 0.0):
        raise DomainError(f"{what} must be strictly positive (got min {arr.min():.3g})")
    return arr


@dataclass(frozen=True)
class MobilitySpec:
    """F(h) = h**n (``power_law``) or F(h) = h**2 + h**3 (``quadratic_cubic``)."""

    kind: str = POWER_LAW
    n: float = 3.0

    def __post_init__(self):
        if self.kind not in (POWER_LAW, QUADRATIC_CUBIC):
            raise ConfigurationError(f"unknown mobility kind {self.kind!r}")
        if self.kind == POWER_LAW and not (self.n > 0 and math.isfinite(self.n)):
            raise ConfigurationError("mobility exponent n must be positive")

    @classmethod
    def power_law(cls, n: float) -> "MobilitySpec":
        return cls(POWER_LAW, float(n))

    @classmethod
    def quadratic_cubic(cls) -> "MobilitySpec":
        return cls(QUADRATIC_CUBIC, 2.0)

    def to_dict(self) -> dict:
        if self.kind == POWER_LAW:
            return {"kind": POWER_LAW, "n": self.n}
        return {"kind": QUADRATIC_CUBIC}

    # -- F and derivatives -------------------------------------------------

    def F(self, h):
        h = np.asarray(h, dtype=float)
        if self.kind == POWER_LAW:
            return h**self.n
        return h * h * (1.0 + h)

    def dF(self, h):
        h = np.asarray(h, dtype=float)
        if self.kind == POWER_LAW:
            return self.n * h ** (self.n - 1.0)
        return h * (2.0 + 3.0 * h)

    # -- antiderivatives of 1/F and of g0 ----------------------------------
    # _phi' = 1/F and _psi' = _phi, each up to an additive constant.

    def _phi(self, r):
        if self.kind == QUADRATIC_CUBIC:
            return -1.0 / r + np.log1p(1.0 / r)
        n = self.n
        if n == 1.0:
            return np.log(r)
        return r ** (1.0 - n) / (1.0 - n)

    def _psi(self, r):
        if self.kind == QUADRATIC_CUBIC:
            return (1.0 + r) * np.log1p(1.0 / r)
        n = self.n
        if n == 1.0:
            return r * np.log(r) - r
        if n == 2.0:
            return -np.log(r)
        return r ** (2.0 - n) / ((1.0 - n) * (2.0 - n))

    def g0(self, s, cap_A: float):
        s = _check_positive(s)
        cap_A = float(_check_positive(cap_A, "cap_A"))
        if self.kind == POWER_LAW and self.n == 1.0:
            return np.log(s / cap_A)
        return self._phi(s) - self._phi(cap_A)

    def G0(self, s, cap_A: float):
        s = _check_positive(s)
        cap_A = float(_check_positive(cap_A, "cap_A"))
        if self.kind == POWER_LAW and self.n == 1.0:
            return s * np.log(s / cap_A) - s + cap_A
        if self.kind == POWER_LAW and self.n == 2.0:
            return (s - cap_A) / cap_A - np.log(s / cap_A)
        return self._psi(s) - self._psi(cap_A) - self._phi(cap_A) * (s - cap_A)

    # -- entropic face mean ------------------------------------------------

    def entropic_mean(self, a, b, derivatives: bool = False):
        """Face mobility M = (b - a) / (g0(b) - g0(a)) for positive a, b.

        Equivalently 1/M is the mean of 1/F over [a, b].  Returns M, or
        ``(M, dM/da, dM/db)`` when ``derivatives`` is set.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        _check_positive(a, "h")
        _check_positive(b, "h")
        a, b = np.broadcast_arrays(a, b)
        diff = b - a
        rel = np.abs(diff) / np.maximum(a, b)

        inv = np.empty(a.shape)
        dinv_a = np.empty(a.shape)
        dinv_b = np.empty(a.shape)

        tiny = rel <= DELTA_SWITCH
        if np.any(tiny):
            mid = 0.5 * (a[tiny] + b[tiny])
            Fm = self.F(mid)
            inv[tiny] = 1.0 / Fm
            d = -0.5 * self.dF(mid) / Fm**2
            dinv_a[tiny] = d
            dinv_b[tiny] = d

        near = (~tiny) & (rel <= _GL_SWITCH)
        if np.any(near):
            an, dn = a[near][:, None], diff[near][:, None]
            r = an + _GL_T[None, :] * dn
            Fr = self.F(r)
            inv[near] = (_GL_W / Fr).sum(axis=1)
            w = _GL_W * (-self.dF(r) / Fr**2)
            dinv_a[near] = (w * (1.0 - _GL_T)).sum(axis=1)
            dinv_b[near] = (w * _GL_T).sum(axis=1)

        far = rel > _GL_SWITCH
        if np.any(far):
            af, bf, df = a[far], b[far], diff[far]
            q = (self._phi(bf) - self._phi(af)) / df
            inv[far] = q
            dinv_a[far] = (q - 1.0 / self.F(af)) / df
            dinv_b[far] = (1.0 / self.F(bf) - q) / df

        M = 1.0 / inv
        if not derivatives:
            return M
        return M, -M * M * dinv_a, -M * M * dinv_b


# -- module-level forms -------------------------------------------------------


def g0(s, mobility: MobilitySpec, cap_A: float):
    """``-int_s^A dr / F(r)``."""
    return mobility.g0(s, cap_A)


def G0(s, mobility: MobilitySpec, cap_A: float):
    """``-int_s^A g0(r) dr``; convex, non-negative, zero at ``cap_A``."""
    return mobility.G0(s, cap_A)


def g_eps_quad(s: float, mobility: MobilitySpec, cap_A: float, eps: float = 0.0) -> float:
    """Regularised ``g_eps`` by adaptive quadrature."""
    _check_positive(s)
    val, _ = integrate.quad(
        lambda r: 1.0 / (float(mobility.F(r)) + eps), s, cap_A, epsabs=0.0, epsrel=1e-13, limit=200
    )
    return -val


def G_eps_quad(s: float, mobility: MobilitySpec, cap_A: float, eps: float = 0.0) -> float:
    """Regularised ``G_eps`` by adaptive quadrature.

    Uses the repeated-integral reduction
    ``-int_s^A g_eps(r) dr = int_s^A (t - s) / (F(t) + eps) dt``.
    """
    _check_positive(s)
    val, _ = integrate.quad(
        lambda t: (t - s) / (float(mobility.F(t)) + eps), s, cap_A, epsabs=0.0, epsrel=1e-13, limit=200
    )
    return val
