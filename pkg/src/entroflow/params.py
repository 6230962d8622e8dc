"""Physical parameter sets for the lubrication and shallow-water systems."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError
from .mobility import POWER_LAW, MobilitySpec

POWER_PRESSURE = "power"
NONLOCAL_PRESSURE = "nonlocal"


def _positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ConfigurationError(f"{name} must be positive")


@dataclass(frozen=True)
class LubricationParams:
    """Thin-film coefficients.

    The flux is ``F(h) h_xxx / (alpha We) - D(h) h_x / (alpha Fr^2)`` with
    ``D(h) = h**(m - 1)``; ``m=None`` selects ``D = F``.
    """

    alpha: float = 1.0
    we: float = 1.0
    fr: float = 1.0
    mobility: MobilitySpec = field(default_factory=lambda: MobilitySpec.power_law(3.0))
    m: float | None = 1.5
    cap_A: float = 2.0
    check_regime: bool = False
    alpha_in_dissipation: bool = True

    def __post_init__(self):
        for name in ("alpha", "we", "fr", "cap_A"):
            _positive(name, getattr(self, name))
        if self.m is not None and not math.isfinite(self.m):
            raise ConfigurationError("m must be finite")
        if self.check_regime and (self.m is None or not 1.0 < self.m < 2.0):
            raise ConfigurationError("drift exponent m must satisfy 1 < m < 2")

    @property
    def capillary(self) -> float:
        return 1.0 / (self.alpha * self.we)

    @property
    def drift(self) -> float:
        return 1.0 / (self.alpha * self.fr**2)

    def D(self, h):
        if self.m is None:
            return self.mobility.F(h)
        return np.asarray(h, dtype=float) ** (self.m - 1.0)

    def dD(self, h):
        if self.m is None:
            return self.mobility.dF(h)
        return (self.m - 1.0) * np.asarray(h, dtype=float) ** (self.m - 2.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mobility"] = self.mobility.to_dict()
        return d


@dataclass(frozen=True)
class ShallowWaterParams:
    """Coefficients of the viscous shallow-water system with drag.

    ``viscous_coeff`` defaults to ``4 / re`` and ``capillary_coeff`` to
    ``1 / we``.  ``pressure='nonlocal'`` swaps the power-law pressure for the
    electrified forcing ``h d_x I(h)``.
    """

    alpha: float = 1.0
    re: float = 1.0
    we: float = 1.0
    fr: float = 1.0
    eps: float = 1e-2
    mobility: MobilitySpec = field(default_factory=lambda: MobilitySpec.power_law(2.0))
    beta: float = 1.0
    viscous_coeff: float | None = None
    capillary_coeff: float | None = None
    cap_A: float = 2.0
    pressure: str = POWER_PRESSURE
    check_coupling: bool = False

    def __post_init__(self):
        for name in ("alpha", "re", "we", "fr", "eps", "beta", "cap_A"):
            _positive(name, getattr(self, name))
        if self.viscous_coeff is None:
            object.__setattr__(self, "viscous_coeff", 4.0 / self.re)
        if self.capillary_coeff is None:
            object.__setattr__(self, "capillary_coeff", 1.0 / self.we)
        if self.viscous_coeff < 0 or self.capillary_coeff < 0:
            raise ConfigurationError("viscous and capillary coefficients must be non-negative")
        if self.pressure not in (POWER_PRESSURE, NONLOCAL_PRESSURE):
            raise ConfigurationError(f"unknown pressure model {self.pressure!r}")
        if self.check_coupling:
            if self.mobility.kind != POWER_LAW:
                raise ConfigurationError("beta + n coupling check needs a power-law mobility")
            s = self.beta + self.mobility.n
            if not 1.0 < s < 2.0:
                raise ConfigurationError(f"beta + n must lie in (1, 2), got {s:g}")

    def potential(self, h):
        """Pressure potential density Pi(h) (already divided by Fr^2)."""
        h = np.asarray(h, dtype=float)
        b = self.beta
        if b == 1.0:
            return h * h / (2.0 * self.fr**2)
        return h ** (b + 1.0) / (self.fr**2 * b * (b + 1.0))

    def chemical_pressure(self, h):
        """Pi'(h) = h**beta / (beta Fr^2)."""
        return np.asarray(h, dtype=float) ** self.beta / (self.beta * self.fr**2)

    def chemical_pressure_prime(self, h):
        return np.asarray(h, dtype=float) ** (self.beta - 1.0) / self.fr**2

    def flux_pressure(self, h):
        """P(h) with P' = h**beta / Fr^2, the flux form of the pressure force."""
        return np.asarray(h, dtype=float) ** (self.beta + 1.0) / ((self.beta + 1.0) * self.fr**2)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mobility"] = self.mobility.to_dict()
        return d


@dataclass(frozen=True)
class ElectrifiedParams:
    """The electrified film has fixed coefficients; only the BF bound is free."""

    cap_A: float = 2.0

    def __post_init__(self):
        _positive("cap_A", self.cap_A)

    def to_dict(self) -> dict:
        return asdict(self)
