"""Parameter records, result types and derived mirror quantities.

Time dependence of every complex amplitude in the package is ``e^{-i w t}``;
a right-moving plane wave is ``e^{i w (x - t)}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional


class ParameterError(ValueError):
    """Raised when a parameter record or operation input violates an invariant."""


class NumericalError(RuntimeError):
    """Raised when a computation hits a pole, fails to bracket a root or diverges."""


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class MiroscParams:
    """Internal oscillator of a mirror.

    m is the oscillator mass, omega its natural frequency and lam the
    oscillator-field coupling (dimension mass^-2 with c = hbar = 1).
    """

    m: float
    omega: float
    lam: float

    def __post_init__(self) -> None:
        m = _finite("m", self.m)
        omega = _finite("omega", self.omega)
        lam = _finite("lam", self.lam)
        if m < 0:
            raise ParameterError(f"mirosc mass m must be >= 0, got {m}")
        if omega <= 0:
            raise ParameterError(f"mirosc frequency omega must be > 0, got {omega}")
        if lam < 0:
            raise ParameterError(f"coupling lam must be >= 0, got {lam}")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "lam", lam)

    @property
    def kappa(self) -> float:
        """Spring constant m * omega**2."""
        return self.m * self.omega**2

    def require_scatterable(self) -> None:
        if self.m == 0.0 and self.lam == 0.0:
            raise ParameterError("m = 0 and lam = 0 together leave the mirror undefined")


@dataclass(frozen=True)
class MirrorConfig:
    """A mirror: internal oscillator, bulk mass, rest position and optional trap."""

    mirosc: MiroscParams
    M: float
    z_eq: float = 0.0
    trap_omega0: Optional[float] = None

    def __post_init__(self) -> None:
        M = _finite("M", self.M)
        if M <= 0:
            raise ParameterError(f"bulk mass M must be > 0, got {M}")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "z_eq", _finite("z_eq", self.z_eq))
        if self.trap_omega0 is not None:
            w0 = _finite("trap_omega0", self.trap_omega0)
            if w0 < 0:
                raise ParameterError(f"trap frequency must be >= 0, got {w0}")
            object.__setattr__(self, "trap_omega0", w0)

    @property
    def is_free(self) -> bool:
        return self.trap_omega0 is None or self.trap_omega0 == 0.0


@dataclass(frozen=True)
class DriveParams:
    """Uniform external source A cos(omega_D t)."""

    A: float
    omega_D: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "A", _finite("A", self.A))
        wd = _finite("omega_D", self.omega_D)
        if wd <= 0:
            raise ParameterError(f"pump frequency omega_D must be > 0, got {wd}")
        object.__setattr__(self, "omega_D", wd)


@dataclass(frozen=True)
class ScatterResult:
    """Reflection and transmission coefficients at one frequency.

    ``A`` is the steady-state oscillator amplitude per unit incident wave, or
    ``None`` with ``resonant=True`` when the closed form diverges.
    """

    R: complex
    T: complex
    A: Optional[complex] = None
    resonant: bool = False

    @property
    def reflectivity(self) -> float:
        return abs(self.R) ** 2

    @property
    def transmissivity(self) -> float:
        return abs(self.T) ** 2


def plasma_frequency(p: MiroscParams) -> float:
    """Frequency scale 3^(3/2) lam^2 / (4 m Omega^2) above which the mirror turns transparent."""
    if p.m == 0.0:
        raise ParameterError("plasma frequency diverges for m = 0 (perfectly reflecting regime)")
    return 3.0**1.5 * p.lam**2 / (4.0 * p.m * p.omega**2)


def rp_index(p: MiroscParams) -> float:
    """Dimensionless index Omega / Omega_p = 4 m Omega^3 / (3^(3/2) lam^2)."""
    if p.lam == 0.0:
        raise ParameterError("r_p index is undefined for lam = 0")
    return 4.0 * p.m * p.omega**3 / (3.0**1.5 * p.lam**2)


def bc_gamma(p: Optional[MiroscParams] = None, *, kappa: Optional[float] = None,
             lam: Optional[float] = None) -> float:
    """Surface coupling of the equivalent Barton-Calogeracos mirror, lam^2 / (2 kappa).

    Pass either a ``MiroscParams`` or the pair ``kappa``, ``lam`` for the
    massless limit taken at fixed spring constant.
    """
    if p is not None:
        kappa, lam = p.kappa, p.lam
    if kappa is None or lam is None:
        raise ParameterError("bc_gamma needs MiroscParams or both kappa and lam")
    kappa = _finite("kappa", kappa)
    if kappa <= 0:
        raise ParameterError(f"kappa must be > 0, got {kappa}")
    return float(lam) ** 2 / (2.0 * kappa)
