"""Radiation-pressure cooling of a mirror facing a fixed perfect mirror.

Geometry: perfect (Dirichlet) mirror at x = 0, MOF mirror of bulk mass M in
a trap of frequency Omega0 at x = L + Z(t), uniform drive J = A cos(Omega_D t)
on the half line.  All oscillating quantities are written as
``a e^{-i Omega_D t} + c.c.``; products of two such signals average to
``2 Re(a b*)`` over a pump period.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from mofsim.core import DriveParams, MiroscParams, MirrorConfig, NumericalError, ParameterError


@dataclass(frozen=True)
class CoolingSetup:
    """Movable mirror at distance L from a fixed perfect mirror, driven at omega_D."""

    mirror: MirrorConfig
    L: float
    drive: DriveParams

    def __post_init__(self) -> None:
        L = float(self.L)
        if not (math.isfinite(L) and L > 0):
            raise ParameterError(f"cavity length L must be > 0, got {self.L}")
        object.__setattr__(self, "L", L)

    @property
    def mirosc(self) -> MiroscParams:
        return self.mirror.mirosc

    @property
    def omega0(self) -> float:
        return 0.0 if self.mirror.trap_omega0 is None else self.mirror.trap_omega0

    @property
    def coupling_strength(self) -> float:
        p = self.mirosc
        return p.lam**2 / (p.m * p.omega**3)

    @property
    def weak_coupling(self) -> bool:
        return self.coupling_strength < 0.1

    def with_length(self, L: float) -> "CoolingSetup":
        return CoolingSetup(self.mirror, L, self.drive)


@dataclass(frozen=True)
class CoolingCoefficients:
    """Coefficients of the pump-averaged mirror equation

        M Z'' + Gamma Z' + M (Omega0^2 - dOmega2) Z = F_rad.

    ``effective_frequency`` is sqrt(Omega0^2 - dOmega2) when that argument is
    non-negative; otherwise it holds sqrt(dOmega2 - Omega0^2), the growth
    rate of the unstable spring, and ``unstable`` is set.
    """

    F_rad: float
    dOmega2: float
    Gamma: float
    effective_frequency: float
    unstable: bool
    warnings: tuple = ()

    def stiffness(self, omega0: float) -> float:
        return omega0**2 - self.dOmega2


@dataclass
class Trajectory:
    times: np.ndarray
    Z: np.ndarray
    Zdot: np.ndarray
    metadata: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Kernel and drive
# ---------------------------------------------------------------------------

def kernel_denominator(omega, p: MiroscParams, L: float):
    omega = np.asarray(omega, dtype=complex)
    return 2.0 * p.m * omega * (omega**2 - p.omega**2) + 1j * p.lam**2 * (1.0 - np.exp(2j * omega * L))


def kernel_D(omega, p: MiroscParams, L: float):
    """Frequency-domain response of the mirosc in the cavity.

    Returns D(w) = -2w / (2 m w (w^2 - Omega^2) + i lam^2 (1 - e^{2iwL})),
    with the removable point w = 0 replaced by its limit 1 / (m Omega^2 - lam^2 L).
    Accepts scalars or arrays.
    """
    w = np.asarray(omega, dtype=complex)
    scalar = w.ndim == 0
    w = np.atleast_1d(w)
    out = np.empty(w.shape, dtype=complex)
    small = np.abs(w) < 1e-12 * max(p.omega, 1.0 / L)
    if np.any(small):
        den0 = p.m * p.omega**2 - p.lam**2 * L
        if den0 == 0.0:
            raise NumericalError("kernel pole at w = 0 (m Omega^2 = lam^2 L)")
        out[small] = 1.0 / den0
    big = ~small
    if np.any(big):
        den = kernel_denominator(w[big], p, L)
        if np.any(den == 0):
            loc = w[big][den == 0][0]
            raise NumericalError(f"kernel pole at w = {loc}")
        out[big] = -2.0 * w[big] / den
    return complex(out[0]) if scalar else out


def drive_amplitudes(d: DriveParams, L: float) -> tuple[complex, complex]:
    """Complex amplitudes of the driven field F and of dF/dx at the mirror.

    F(t, L) = alpha e^{-i Omega_D t} + c.c. and dF/dx(t, L) = alpha' e^{-i Omega_D t} + c.c.
    """
    wd = d.omega_D
    phase = np.exp(1j * wd * L)
    alpha = d.A / (2.0 * wd**2) * (phase - 1.0)
    alpha_p = 1j * d.A / (2.0 * wd) * phase
    return complex(alpha), complex(alpha_p)


def drive_curvature_amplitude(d: DriveParams, L: float) -> complex:
    """Amplitude of d^2F/dx^2 at the mirror, i Omega_D alpha'."""
    return 1j * d.omega_D * drive_amplitudes(d, L)[1]


def driven_field(d: DriveParams, t, x):
    """Steady driven field between the perfect mirror and any x > 0 (no MOF mirror)."""
    wd = d.omega_D
    return d.A / wd**2 * (np.cos(wd * (np.asarray(x) - t)) - np.cos(wd * t))


def q0_steady(p: MiroscParams, d: DriveParams, L: float) -> complex:
    """Complex amplitude lam * alpha * D(Omega_D) of the steady mirosc oscillation."""
    alpha, _ = drive_amplitudes(d, L)
    return complex(p.lam * alpha * kernel_D(d.omega_D, p, L))


# ---------------------------------------------------------------------------
# Averaged coefficients
# ---------------------------------------------------------------------------

def _raw_coefficients(setup: CoolingSetup) -> tuple[complex, complex, float]:
    """The three closed forms before realization: F_rad, M dOmega2 and Gamma."""
    p, d, L = setup.mirosc, setup.drive, setup.L
    lam2 = p.lam**2
    wd = d.omega_D
    alpha, ap = drive_amplitudes(d, L)
    D = kernel_D(wd, p, L)
    aD = alpha * D
    back = np.conj(aD) * np.exp(-2j * wd * L)
    F = lam2 * aD * (np.conj(ap) + 0.5 * lam2 * back)
    MdO = (-1j * wd * lam2 * aD * (np.conj(ap) + 1.5 * lam2 * back)
           + lam2 * D * (ap + lam2 * aD * np.exp(2j * wd * L))
           * (np.conj(ap) + lam2 * np.conj(aD) * np.cos(2 * wd * L)))
    G = 0.5 * lam2**2 * abs(aD) ** 2 * math.cos(2 * wd * L)
    return complex(F), complex(MdO), float(G)


def cooling_coefficients(setup: CoolingSetup) -> CoolingCoefficients:
    """Radiation force, optical spring and damping of the pump-averaged mirror equation.

    F_rad and M dOmega2 are realized as twice the real part of the complex
    closed forms; Gamma is used as given.
    """
    notes = []
    p, d = setup.mirosc, setup.drive
    if not setup.weak_coupling:
        notes.append(f"coupling lam^2/(m Omega^3) = {setup.coupling_strength:.3g} is not weak")
    if setup.omega0 * setup.L >= 0.1:
        notes.append(f"Omega0 L = {setup.omega0 * setup.L:.3g} is not small")
    if setup.omega0 >= 0.1 * d.omega_D:
        notes.append("trap frequency is not well separated from the pump")
    F, MdO, G = _raw_coefficients(setup)
    F_rad = 2.0 * F.real
    dO2 = 2.0 * MdO.real / setup.mirror.M
    arg = setup.omega0**2 - dO2
    unstable = arg < 0
    return CoolingCoefficients(
        F_rad=F_rad,
        dOmega2=dO2,
        Gamma=G,
        effective_frequency=math.sqrt(abs(arg)),
        unstable=bool(unstable),
        warnings=tuple(notes),
    )


# ---------------------------------------------------------------------------
# Averaged evolution
# ---------------------------------------------------------------------------

def _rk4(f: Callable, y0: np.ndarray, dt: float, n: int) -> np.ndarray:
    out = np.empty((n + 1, y0.size))
    out[0] = y = np.asarray(y0, dtype=float)
    for i in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = y
    return out


def evolve_averaged(setup: CoolingSetup, coeffs: CoolingCoefficients, Z0: float, V0: float,
                    t_end: float, dt: float) -> Trajectory:
    """Integrate the pump-averaged mirror equation with fixed-step RK4."""
    if not (t_end > 0 and dt > 0):
        raise ParameterError("t_end and dt must be positive")
    M = setup.mirror.M
    k = coeffs.stiffness(setup.omega0)
    scale = math.sqrt(abs(k)) + abs(coeffs.Gamma) / M
    if scale > 0 and dt * scale > 2 * math.pi / 40:
        raise ParameterError("dt must resolve the effective frequency with >= 40 steps per period")
    n = int(round(t_end / dt))

    def f(y):
        return np.array([y[1], (coeffs.F_rad - coeffs.Gamma * y[1]) / M - k * y[0]])

    ys = _rk4(f, np.array([Z0, V0], dtype=float), dt, n)
    t = dt * np.arange(n + 1)
    meta = {"integrator": "rk4", "dt": dt, "model": "averaged", "unstable": coeffs.unstable}
    if not np.all(np.isfinite(ys)):
        raise NumericalError("averaged trajectory overflowed")
    return Trajectory(t, ys[:, 0], ys[:, 1], meta)


# ---------------------------------------------------------------------------
# Full delay dynamics
# ---------------------------------------------------------------------------

class _History:
    """Uniformly sampled history with 4-point (cubic) Lagrange interpolation."""

    def __init__(self, t0: float, dt: float, values: np.ndarray, capacity: int):
        self.t0 = t0
        self.dt = dt
        self.buf = np.empty((capacity, values.shape[1]))
        self.n = values.shape[0]
        self.buf[: self.n] = values

    def append(self, row: np.ndarray) -> None:
        self.buf[self.n] = row
        self.n += 1

    def __call__(self, t: float) -> np.ndarray:
        s = (t - self.t0) / self.dt
        i = int(math.floor(s)) - 1
        if i < 0 or i + 3 >= self.n:
            raise NumericalError(f"history does not cover t = {t}")
        u = s - (i + 1)
        # Lagrange weights on nodes -1, 0, 1, 2
        w = np.array([
            -u * (u - 1) * (u - 2) / 6.0,
            (u + 1) * (u - 1) * (u - 2) / 2.0,
            -(u + 1) * u * (u - 2) / 2.0,
            (u + 1) * u * (u - 1) / 6.0,
        ])
        return w @ self.buf[i:i + 4]


def quasistatic_q1_amplitudes(setup: CoolingSetup) -> tuple[complex, complex]:
    """Amplitudes (c+, c-) with q1 ~ lam Z (c+ e^{-i Omega_D t} + c- e^{i Omega_D t}) for slow Z."""
    p, d, L = setup.mirosc, setup.drive, setup.L
    wd = d.omega_D
    alpha, ap = drive_amplitudes(d, L)
    D = kernel_D(wd, p, L)
    cp = D * (ap + p.lam**2 * alpha * D * np.exp(2j * wd * L))
    return complex(cp), complex(np.conj(cp))


class ForceFunctional:
    """Back-reaction force on the mirror, linear in Z and in the mirosc correction q1.

    Terms follow the expansion of the worldline equation about Z = 0 with q0
    the closed-form steady oscillation and q1 the first-order correction.
    """

    def __init__(self, setup: CoolingSetup):
        p, d, L = setup.mirosc, setup.drive, setup.L
        self.lam = p.lam
        self.wd = d.omega_D
        self.L = L
        self.a0 = q0_steady(p, d, L)
        self.ap = drive_amplitudes(d, L)[1]

    def pieces(self, t: float) -> tuple[float, float, float, float, float]:
        """q0(t), q0(t-2L), q0'(t-2L), F_x(t), F_xx(t)."""
        e = complex(math.cos(self.wd * t), -math.sin(self.wd * t))
        td = t - 2 * self.L
        ed = complex(math.cos(self.wd * td), -math.sin(self.wd * td))
        a0, ap, wd = self.a0, self.ap, self.wd
        return (2.0 * (a0 * e).real, 2.0 * (a0 * ed).real, 2.0 * (-1j * wd * a0 * ed).real,
                2.0 * (ap * e).real, 2.0 * (1j * wd * ap * e).real)

    def __call__(self, t: float, Z: float, Zdot: float, Z_del: float, Zdot_del: float,
                 q1: float, q1_del: float) -> float:
        lam = self.lam
        q0, q0d, q0dot_d, Fx, Fxx = self.pieces(t)
        F = lam * q0 * (Fx + 0.5 * lam * q0d)
        F += lam * q0 * (Fxx - 0.5 * lam * q0dot_d) * Z
        F += lam * q0 * (-0.5 * lam * q0dot_d * Z - 0.5 * lam * q0d * Zdot_del
                         - 0.5 * lam * q0dot_d * Z_del)
        F += lam * q1 * (Fx + 0.5 * lam * q0d)
        F += 0.5 * lam**2 * q0 * q1_del
        return F


def force_functional(setup: CoolingSetup, t: float, Z: float, Zdot: float, Z_del: float,
                     Zdot_del: float, q1: float, q1_del: float) -> float:
    """One-shot evaluation of :class:`ForceFunctional`."""
    return ForceFunctional(setup)(t, Z, Zdot, Z_del, Zdot_del, q1, q1_del)


def evolve_full_delay(setup: CoolingSetup, Z0: float, V0: float, t_end: float, dt: float,
                      history: Optional[Callable[[float], tuple]] = None,
                      cap_fraction: float = 0.1) -> Trajectory:
    """Integrate the delay integro-differential mirror equation with fixed-step RK4.

    The mirosc correction q1 is advanced together with the mirror through

        q1'' + Omega^2 q1 - (lam^2 / 2m) S = (lam/m) F_x Z + (lam^2 / 2m) (Z + Z(t-2L)) q0(t-2L),
        S' = q1(t) - q1(t-2L),

    where S is the running integral of q1 over the last round trip.  This is
    the causal convolution of the cavity kernel with the source, evaluated in
    the time domain.  q0 is the closed-form steady oscillation.

    ``history(t)`` returns (Z, Zdot) for t <= 0; the default continues the
    free trap orbit backwards.  q1 before t = 0 is the quasi-static response
    to that history, so the run starts without a mirosc transient.
    """
    p, d, L = setup.mirosc, setup.drive, setup.L
    if not (t_end > 0 and dt > 0):
        raise ParameterError("t_end and dt must be positive")
    if dt > L / 10:
        raise ParameterError(f"dt = {dt} must be <= L/10 = {L / 10} to resolve the round trip")
    if p.m == 0:
        raise ParameterError("full delay dynamics needs a massive mirosc")
    M = setup.mirror.M
    w0 = setup.omega0
    lam = p.lam
    wd = d.omega_D
    n = int(round(t_end / dt))

    if history is None:
        def history(t):
            if w0 == 0:
                return Z0 + V0 * t, V0
            return (Z0 * math.cos(w0 * t) + V0 / w0 * math.sin(w0 * t),
                    -Z0 * w0 * math.sin(w0 * t) + V0 * math.cos(w0 * t))

    cp, _ = quasistatic_q1_amplitudes(setup)

    def q1_qs(t, Z, Zd):
        return 2.0 * lam * (cp * np.exp(-1j * wd * t)).real * Z

    # history grid: enough points before 0 for the delay plus interpolation stencil
    n_hist = int(math.ceil(2 * L / dt)) + 4
    th = dt * np.arange(-n_hist, 1)
    rows = np.empty((th.size, 3))
    for i, t in enumerate(th):
        Zh, Vh = history(t)
        rows[i] = (Zh, Vh, q1_qs(t, Zh, Vh))
    hist = _History(th[0], dt, rows, th.size + n + 2)
    Zinit, Vinit = history(0.0)
    # S(0) by trapezoid over the q1 history
    fine = np.linspace(-2 * L, 0.0, 64 * int(math.ceil(2 * L / dt)) + 1)
    S0 = np.trapezoid([q1_qs(tt, *history(tt)) for tt in fine], fine)
    q1dot0 = 2.0 * lam * (-1j * wd * cp).real * Zinit
    y = np.array([Zinit, Vinit, rows[-1, 2], q1dot0, S0])
    force = ForceFunctional(setup)

    def rhs(t, y, lookup):
        Z, V, q1, u, S = y
        Zdel, Vdel, q1del = lookup(t - 2 * L)
        q0, q0d, _, Fx, _ = force.pieces(t)
        acc_q = (-p.omega**2 * q1 + 0.5 * lam**2 / p.m * S + lam / p.m * Fx * Z
                 + 0.5 * lam**2 / p.m * (Z + Zdel) * q0d)
        f = force(t, Z, V, Zdel, Vdel, q1, q1del)
        return np.array([V, -w0**2 * Z + f / M, u, acc_q, q1 - q1del])

    out = np.empty((n + 1, 5))
    out[0] = y
    cap = cap_fraction * L
    capped_at = None
    for i in range(n):
        t = i * dt
        k1 = rhs(t, y, hist)
        k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1, hist)
        k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2, hist)
        k4 = rhs(t + dt, y + dt * k3, hist)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = y
        hist.append(y[[0, 1, 2]])
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"full delay integration diverged at t = {t + dt}")
        if abs(y[0]) > cap:
            capped_at = (i + 1) * dt
            out = out[: i + 2]
            warnings.warn(f"|Z| exceeded {cap_fraction} L at t = {capped_at}; small-Z expansion invalid")
            break
    times = dt * np.arange(out.shape[0])
    meta = {"integrator": "rk4", "dt": dt, "model": "full-delay", "q1": out[:, 2],
            "capped_at": capped_at}
    return Trajectory(times, out[:, 0], out[:, 1], meta)
