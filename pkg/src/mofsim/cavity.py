"""Two-mirror cavities: summed multiple scattering, boxed normal modes and the
radiation-pressure (photon number times displacement) coupling they imply."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from mofsim.core import MiroscParams, MirrorConfig, NumericalError, ParameterError


@dataclass(frozen=True)
class CavityConfig:
    """mirror1 sits at x = 0 and mirror2 at x = L."""

    mirror1: MirrorConfig
    mirror2: MirrorConfig
    L: float

    def __post_init__(self) -> None:
        L = float(self.L)
        if not (math.isfinite(L) and L > 0):
            raise ParameterError(f"cavity length L must be > 0, got {self.L}")
        object.__setattr__(self, "L", L)


@dataclass(frozen=True)
class CavityScatter:
    """Coefficients for a wave e^{iwx} incident from the left.

    ``psi`` holds, for the regions x < 0, 0 < x < L and x > L, the complex
    amplitudes (c+, c-) of e^{iwx} and e^{-iwx}.
    """

    omega: float
    L: float
    R1: complex
    T1: complex
    R2: complex
    T2: complex
    A1: Optional[complex]
    A2: Optional[complex]
    psi: Tuple[Tuple[complex, complex], Tuple[complex, complex], Tuple[complex, complex]]

    @property
    def interior_enhancement(self) -> float:
        """|T1 / (1 - R1 R2)|, the right-moving interior amplitude per unit incident wave."""
        return abs(self.psi[1][0])

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        w = self.omega
        out = np.empty(x.shape, dtype=complex)
        regions = (x < 0, (x >= 0) & (x <= self.L), x > self.L)
        for mask, (cp, cm) in zip(regions, self.psi):
            out[mask] = cp * np.exp(1j * w * x[mask]) + cm * np.exp(-1j * w * x[mask])
        return out


def _mirror_r(p: MiroscParams, omega: float) -> complex:
    if p.m == 0.0 and p.lam == 0.0:
        raise ParameterError("mirror with m = 0 and lam = 0 is undefined")
    return 1j * p.lam**2 / (2.0 * p.m * omega * (p.omega**2 - omega**2) - 1j * p.lam**2)


def two_mirror_scatter(c: CavityConfig, omega: float) -> CavityScatter:
    """Closed-form scattering off two static MOF mirrors, multiple reflections summed."""
    w = float(omega)
    if not w > 0:
        raise ParameterError(f"omega must be > 0, got {omega}")
    p1, p2, L = c.mirror1.mirosc, c.mirror2.mirosc, c.L
    ph = np.exp(2j * w * L)
    R1 = _mirror_r(p1, w)
    T1 = 1.0 + R1
    R2 = _mirror_r(p2, w) * ph
    T2 = 1.0 + R2 / ph
    loop = R1 * R2
    den = 1.0 - loop
    # |R1 R2| may round to 1 for near-perfect mirrors; only a vanishing denominator is a true pole
    if abs(den) < 1e-14:
        raise NumericalError(f"1 - R1 R2 = {den:.3g}: closed-cavity bound state, no scattering solution")
    d1 = p1.m * (p1.omega**2 - w**2)
    d2 = p2.m * (p2.omega**2 - w**2)
    A1 = None if d1 == 0 else p1.lam * T1 / d1 * (1.0 + R2) / den
    A2 = None if d2 == 0 else p2.lam * T2 / d2 * T1 * np.exp(1j * w * L) / den
    psi = (
        (1.0 + 0j, (R1 + R2 + 2.0 * R1 * R2) / den),
        (T1 / den, T1 * R2 / den),
        (T1 * T2 / den, 0j),
    )
    cast = lambda z: None if z is None else complex(z)
    return CavityScatter(w, L, complex(R1), complex(T1), complex(R2), complex(T2),
                         cast(A1), cast(A2), tuple((complex(a), complex(b)) for a, b in psi))


# ---------------------------------------------------------------------------
# Boxed modes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CavityMode:
    """Mode of the Dirichlet box [0, X] with a delta coupling of strength g at L.

    The unnormalized shape is a sin(kx) for x < L and b sin(k(X - x)) for
    x > L; the unit-norm mode is N_k times that shape.
    """

    k: float
    L: float
    X: float
    g: float
    a: float
    b: float
    N_k: float

    @property
    def omega_k(self) -> float:
        return self.k

    def shape(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.L, self.a * np.sin(self.k * x), self.b * np.sin(self.k * (self.X - x)))

    def u(self, x) -> np.ndarray:
        return self.N_k * self.shape(x)

    def shape_at_mirror(self) -> float:
        return self.a * math.sin(self.k * self.L)

    def shape_slopes_at_mirror(self) -> Tuple[float, float]:
        """One-sided derivatives of the shape at x = L (left, right)."""
        k = self.k
        return (self.a * k * math.cos(k * self.L), -self.b * k * math.cos(k * (self.X - self.L)))

    def jump_residual(self) -> float:
        left, right = self.shape_slopes_at_mirror()
        scale = max(abs(left), abs(right), abs(self.g * self.shape_at_mirror()), 1e-300)
        return abs((right - left) + self.g * self.shape_at_mirror()) / scale

    @property
    def interior_weight(self) -> float:
        """Fraction of the unit norm inside [0, L]."""
        k, L = self.k, self.L
        return self.N_k**2 * self.a**2 * (L / 2 - math.sin(2 * k * L) / (4 * k))


def boxed_mode_function(k, L: float, X: float, g: float):
    """Determinant of the matching conditions; its positive zeros are the mode wavenumbers."""
    k = np.asarray(k, dtype=float)
    return k * np.sin(k * X) - g * np.sin(k * L) * np.sin(k * (X - L))


def _shape_amplitudes(k: float, L: float, X: float, g: float) -> Tuple[float, float]:
    sl, sr = math.sin(k * L), math.sin(k * (X - L))
    cl, cr = math.cos(k * L), math.cos(k * (X - L))
    # rows: continuity, derivative jump
    mat = np.array([[sl, -sr], [-k * cl + g * sl, -k * cr]])
    _, _, vt = np.linalg.svd(mat)
    a, b = vt[-1]
    if a < 0 or (a == 0 and b < 0):
        a, b = -a, -b
    return float(a), float(b)


def _shape_norm2(k: float, L: float, X: float, a: float, b: float) -> float:
    R = X - L
    left = a * a * (L / 2 - math.sin(2 * k * L) / (4 * k))
    right = b * b * (R / 2 - math.sin(2 * k * R) / (4 * k))
    return left + right


def cavity_modes_boxed(c: CavityConfig, box_size: float, n_modes: int,
                       rtol: float = 1e-12) -> List[CavityMode]:
    """Lowest ``n_modes`` modes of the box [0, X] with mirror2 acting as a delta
    coupling of strength lam2^2 / kappa2 at x = L.

    Roots are bracketed by sign changes on a grid of spacing pi / (8X) and then
    refined by a bracketing solver to ``rtol`` relative accuracy.
    """
    X = float(box_size)
    L = c.L
    if not X > L:
        raise ParameterError(f"box size X = {X} must exceed L = {L}")
    if n_modes < 1:
        raise ParameterError("n_modes must be >= 1")
    p = c.mirror2.mirosc
    if p.lam == 0.0:
        g = 0.0
    else:
        if p.kappa == 0.0:
            raise ParameterError("delta strength lam^2 / kappa needs kappa > 0")
        g = p.lam**2 / p.kappa
    step = math.pi / (8 * X)
    modes: List[CavityMode] = []
    k_lo = 0.5 * step
    f_lo = float(boxed_mode_function(k_lo, L, X, g))
    while len(modes) < n_modes:
        ks = k_lo + step * np.arange(1, 4097)
        fs = boxed_mode_function(ks, L, X, g)
        prev_k, prev_f = k_lo, f_lo
        for kk, ff in zip(ks, fs):
            if ff == 0.0 or np.sign(ff) != np.sign(prev_f):
                if ff == 0.0:
                    root = float(kk)
                else:
                    root, info = brentq(boxed_mode_function, prev_k, kk, args=(L, X, g),
                                        xtol=rtol * kk, rtol=4 * np.finfo(float).eps, full_output=True)
                    if not info.converged:
                        raise NumericalError(
                            f"mode root in [{prev_k}, {kk}] did not converge to rtol {rtol}")
                a, b = _shape_amplitudes(root, L, X, g)
                n2 = _shape_norm2(root, L, X, a, b)
                modes.append(CavityMode(root, L, X, g, a, b, 1.0 / math.sqrt(n2)))
                if len(modes) == n_modes:
                    break
                ff = float(boxed_mode_function(kk, L, X, g)) if ff != 0.0 else float(
                    boxed_mode_function(kk + 1e-3 * step, L, X, g))
            prev_k, prev_f = kk, ff
        k_lo, f_lo = prev_k, prev_f
    return modes


def nx_coupling(mode: CavityMode, p: MiroscParams) -> float:
    """Coefficient of Z times the mode energy in the adiabatically reduced interaction,

        g = (lam^2 / 2 kappa) |N_k|^2 Re[u'(L) u(L)],

    with u the mode shape and u'(L) the mean of the one-sided slopes.
    """
    if not (mode.N_k > 0 and math.isfinite(mode.N_k)):
        raise ParameterError("mode must carry a finite positive normalization")
    if p.lam == 0.0:
        return 0.0
    if p.kappa == 0.0:
        raise ParameterError("nx coupling needs kappa > 0")
    left, right = mode.shape_slopes_at_mirror()
    slope = 0.5 * (left + right)
    return p.lam**2 / (2.0 * p.kappa) * mode.N_k**2 * slope * mode.shape_at_mirror()


def adiabatic_effective_source(phi_at_mirror, phi_ddot, p: MiroscParams):
    """Mirosc coordinate slaved to a slowly varying field: (lam/kappa)(phi - phi''/Omega^2)."""
    if p.kappa == 0.0:
        raise ParameterError("adiabatic elimination needs kappa > 0")
    return p.lam / p.kappa * (np.asarray(phi_at_mirror) - np.asarray(phi_ddot) / p.omega**2)
