"""Lattice time-domain solver for the field, the mirror oscillators and the mirror worldlines.

The field lives on uniform nodes x_i = x_min + i dx.  A point coupling at Z is
spread over the two nodes bracketing Z with linear (hat) weights, and the
mirror reads Phi(Z) and dPhi/dx(Z) with the same weights, so the discrete
system is Hamiltonian:

    H = dx sum_i [Pi_i^2 / 2 + (Phi_{i+1} - Phi_i)^2 / (2 dx^2) - J_i Phi_i]
        + sum_a [p_a^2 / 2m_a + m_a Omega_a^2 q_a^2 / 2 + P_a^2 / 2M_a + V_a(Z_a)
                 - lam_a q_a Phi(Z_a)].

``step_nonrel`` is kick-drift-kick leapfrog on H (momenta staggered half a
step inside each call).  ``step_relativistic`` replaces the mirror kinetic and
internal energy by sqrt(P^2 + M_eff^2) and uses a Strang splitting of the
field kinetic energy against the rest.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigs, splu

from mofsim.core import DriveParams, MiroscParams, MirrorConfig, NumericalError, ParameterError

ABSORBING = "absorbing"
REFLECTING = "reflecting"
_MARGIN_CELLS = 8


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------

@dataclass
class MirrorState:
    config: MirrorConfig
    q: float = 0.0
    p: float = 0.0
    Z: float = 0.0
    P: float = 0.0
    static: bool = False

    @property
    def mirosc(self) -> MiroscParams:
        return self.config.mirosc

    def trap_force(self) -> float:
        w0 = self.config.trap_omega0
        if not w0:
            return 0.0
        return -self.config.M * w0**2 * (self.Z - self.config.z_eq)

    def trap_energy(self) -> float:
        w0 = self.config.trap_omega0
        if not w0:
            return 0.0
        return 0.5 * self.config.M * w0**2 * (self.Z - self.config.z_eq) ** 2


@dataclass
class Drive:
    """Uniform source A cos(omega_D t) on x_start <= x <= x_stop with a raised-cosine ramp."""

    params: DriveParams
    x_start: float = -math.inf
    x_stop: float = math.inf
    ramp_periods: float = 5.0

    def envelope(self, t: float) -> float:
        t_ramp = self.ramp_periods * 2 * math.pi / self.params.omega_D
        if t_ramp <= 0 or t >= t_ramp:
            return 1.0
        if t <= 0:
            return 0.0
        return 0.5 * (1.0 - math.cos(math.pi * t / t_ramp))

    def value(self, t: float) -> float:
        return self.params.A * self.envelope(t) * math.cos(self.params.omega_D * t)


@dataclass
class IncidentWave:
    """Right-moving wave f(t - x) injected through the left absorbing boundary.

    f(s) = amplitude * ramp(s) * cos(omega s), ramp rising over ``ramp_periods``.
    """

    omega: float
    amplitude: float = 1.0
    ramp_periods: float = 5.0
    x_ref: float = 0.0

    def profile(self, s):
        s = np.asarray(s, dtype=float) + self.x_ref
        t_ramp = self.ramp_periods * 2 * math.pi / self.omega
        env = np.where(s <= 0, 0.0, np.where(s >= t_ramp, 1.0, 0.5 * (1 - np.cos(np.pi * s / t_ramp))))
        return self.amplitude * env * np.cos(self.omega * s)

    def __call__(self, t: float, x):
        return self.profile(t - np.asarray(x, dtype=float))


@dataclass
class SimState:
    x_min: float
    dx: float
    Phi: np.ndarray
    Pi: np.ndarray
    mirrors: List[MirrorState]
    t: float = 0.0
    boundary: Tuple[str, str] = (ABSORBING, ABSORBING)
    drive: Optional[Drive] = None
    incident: Optional[IncidentWave] = None
    filter: Optional["RunawayFilter"] = None
    steps: int = 0

    def __post_init__(self) -> None:
        self.Phi = np.asarray(self.Phi, dtype=float)
        self.Pi = np.asarray(self.Pi, dtype=float)
        if self.Phi.shape != self.Pi.shape or self.Phi.ndim != 1:
            raise ParameterError("Phi and Pi must be 1-D arrays of equal length")
        if self.Phi.size < 2 * _MARGIN_CELLS + 3:
            raise ParameterError("lattice too small")
        if not self.dx > 0:
            raise ParameterError("dx must be > 0")
        for b in self.boundary:
            if b not in (ABSORBING, REFLECTING):
                raise ParameterError(f"unknown boundary kind {b!r}")
        self.check_margins()

    @property
    def n(self) -> int:
        return self.Phi.size

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @property
    def x_max(self) -> float:
        return self.x_min + self.dx * (self.n - 1)

    def check_margins(self) -> None:
        lo = self.x_min + _MARGIN_CELLS * self.dx
        hi = self.x_max - _MARGIN_CELLS * self.dx
        for a, m in enumerate(self.mirrors):
            if not (lo <= m.Z <= hi):
                raise ParameterError(
                    f"mirror {a} at Z = {m.Z} is within {_MARGIN_CELLS} cells of the lattice boundary")

    def copy(self) -> "SimState":
        return replace(self, Phi=self.Phi.copy(), Pi=self.Pi.copy(),
                       mirrors=[replace(m) for m in self.mirrors])


def make_lattice(x_min: float, x_max: float, dx: float, mirrors: Sequence[MirrorState] = (),
                 boundary=(ABSORBING, ABSORBING), **kw) -> SimState:
    n = int(round((x_max - x_min) / dx)) + 1
    return SimState(x_min, dx, np.zeros(n), np.zeros(n), list(mirrors), boundary=tuple(boundary), **kw)


# ---------------------------------------------------------------------------
# Hat interpolation
# ---------------------------------------------------------------------------

def hat(state: SimState, Z: float) -> Tuple[int, float]:
    """Left node index j and fractional offset f of Z in [x_j, x_{j+1})."""
    s = (Z - state.x_min) / state.dx
    j = int(math.floor(s))
    return j, s - j


def field_at(state: SimState, Z: float, Phi: Optional[np.ndarray] = None) -> float:
    Phi = state.Phi if Phi is None else Phi
    j, f = hat(state, Z)
    return (1.0 - f) * Phi[j] + f * Phi[j + 1]


def gradient_at(state: SimState, Z: float, Phi: Optional[np.ndarray] = None) -> float:
    Phi = state.Phi if Phi is None else Phi
    j, _ = hat(state, Z)
    return (Phi[j + 1] - Phi[j]) / state.dx


def mirror_reading(Phi: np.ndarray, x_min: float, dx: float, Z: float, lam: float,
                   q: float) -> Tuple[int, float, float, float, float]:
    """Hat indices plus the field readings a mirror uses, with the lattice self-field removed.

    A hat-spread source lam*q at fraction f of a cell carries the static field
    -(lam q / 2) sum_k w_k |x - x_k|, which reads as -lam q dx f(1-f) at Z
    and has link gradient -(lam q / 2)(1 - 2f).  The continuum point source
    has no such f dependence, and left in place it pins a moving mirror to
    the nodes.  Removing it is the same as adding
    U = -(lam^2 q^2 dx / 2) f (1 - f) to the Hamiltonian.

    Returns (j, f, phi_energy, phi_force, grad): the interaction energy is
    -lam q phi_energy, the force on q is lam phi_force and the force on Z is
    lam q grad.
    """
    s = (Z - x_min) / dx
    j = int(math.floor(s))
    f = s - j
    phi = (1.0 - f) * Phi[j] + f * Phi[j + 1]
    self_term = lam * q * dx * f * (1.0 - f)
    grad = (Phi[j + 1] - Phi[j]) / dx + 0.5 * lam * q * (1.0 - 2.0 * f)
    return j, f, phi + 0.5 * self_term, phi + self_term, grad


def regularized_field_at(state: SimState, m: "MirrorState") -> float:
    return mirror_reading(state.Phi, state.x_min, state.dx, m.Z, m.mirosc.lam, m.q)[2]


# ---------------------------------------------------------------------------
# Energies
# ---------------------------------------------------------------------------

def field_energy(state: SimState, lo: Optional[int] = None, hi: Optional[int] = None) -> float:
    """Field energy on nodes [lo, hi), with gradient links inside that range."""
    lo = 0 if lo is None else lo
    hi = state.n if hi is None else hi
    Pi = state.Pi[lo:hi]
    dphi = np.diff(state.Phi[lo:hi])
    return state.dx * (0.5 * np.dot(Pi, Pi)) + 0.5 * np.dot(dphi, dphi) / state.dx


def _drive_vector(state: SimState, t: float) -> Optional[np.ndarray]:
    if state.drive is None:
        return None
    x = state.x
    mask = (x >= state.drive.x_start) & (x <= state.drive.x_stop)
    return state.drive.value(t) * mask


def mirosc_energy(m: MirrorState) -> float:
    p = m.mirosc
    if p.m == 0:
        return 0.0
    return m.p**2 / (2 * p.m) + 0.5 * p.m * p.omega**2 * m.q**2


def effective_mass(q: float, p: float, phi_at_Z: float, cfg: MirrorConfig) -> float:
    """Rest mass plus oscillator energy plus interaction energy."""
    mp = cfg.mirosc
    if mp.m == 0:
        raise ParameterError("effective mass needs a massive mirosc")
    return cfg.M + p**2 / (2 * mp.m) + 0.5 * mp.m * mp.omega**2 * q**2 - mp.lam * q * phi_at_Z


def total_energy_nonrel(state: SimState) -> float:
    E = field_energy(state)
    J = _drive_vector(state, state.t)
    if J is not None:
        E -= state.dx * np.dot(J, state.Phi)
    for m in state.mirrors:
        E += mirosc_energy(m) + m.trap_energy() - m.mirosc.lam * m.q * regularized_field_at(state, m)
        if not m.static:
            E += m.P**2 / (2 * m.config.M)
    return float(E)


def total_energy_relativistic(state: SimState) -> float:
    E = field_energy(state)
    J = _drive_vector(state, state.t)
    if J is not None:
        E -= state.dx * np.dot(J, state.Phi)
    for m in state.mirrors:
        meff = effective_mass(m.q, m.p, regularized_field_at(state, m), m.config)
        E += math.sqrt(m.P**2 + meff**2) + m.trap_energy()
    return float(E)


# ---------------------------------------------------------------------------
# Nonrelativistic leapfrog
# ---------------------------------------------------------------------------

def _check_courant(state: SimState, dt: float) -> None:
    if not dt > 0:
        raise ParameterError("dt must be > 0")
    if dt > state.dx * (1 + 1e-12):
        raise ParameterError(f"Courant condition violated: dt = {dt} > dx = {state.dx}")


def _laplacian(Phi: np.ndarray, dx: float) -> np.ndarray:
    out = np.zeros_like(Phi)
    out[1:-1] = (Phi[2:] - 2 * Phi[1:-1] + Phi[:-2]) / (dx * dx)
    return out


def _kick(state: SimState, h: float, t: float) -> None:
    acc = _laplacian(state.Phi, state.dx)
    J = _drive_vector(state, t)
    if J is not None:
        acc += J
    for m in state.mirrors:
        lam = m.mirosc.lam
        j, f, _, phiZ, grad = mirror_reading(state.Phi, state.x_min, state.dx, m.Z, lam, m.q)
        if lam != 0.0:
            src = lam * m.q / state.dx
            acc[j] += (1.0 - f) * src
            acc[j + 1] += f * src
        mp = m.mirosc
        m.p += h * (-mp.m * mp.omega**2 * m.q + lam * phiZ)
        if not m.static:
            m.P += h * (m.trap_force() + lam * m.q * grad)
    acc[0] = acc[-1] = 0.0
    state.Pi += h * acc


def _boundaries(state: SimState, old: np.ndarray, dt: float) -> None:
    """Apply end conditions after a drift of length dt starting at state.t; ``old`` is Phi before it."""
    Phi = state.Phi
    c = (dt - state.dx) / (dt + state.dx)
    t1 = state.t + dt
    for side in (0, 1):
        i, nb = (0, 1) if side == 0 else (-1, -2)
        if state.boundary[side] == REFLECTING:
            Phi[i] = 0.0
            state.Pi[i] = 0.0
            continue
        inc = state.incident if side == 0 else None
        if inc is None:
            new = old[nb] + c * (Phi[nb] - old[i])
        else:
            x0, x1 = state.x_min, state.x_min + state.dx
            s_new_b, s_old_nb = inc(t1, x0), inc(state.t, x1)
            s_new_nb, s_old_b = inc(t1, x1), inc(state.t, x0)
            new = s_new_b + (old[nb] - s_old_nb) + c * ((Phi[nb] - s_new_nb) - (old[i] - s_old_b))
        state.Pi[i] = (new - old[i]) / dt
        Phi[i] = new


def _drift_mirosc(m: MirrorState, h: float) -> None:
    if m.mirosc.m > 0:
        m.q += h * m.p / m.mirosc.m


def step_nonrel(state: SimState, dt: float, n_steps: int = 1) -> SimState:
    """Advance ``state`` in place by ``n_steps`` leapfrog steps; returns it."""
    _check_courant(state, dt)
    for _ in range(n_steps):
        _kick(state, 0.5 * dt, state.t)
        old = state.Phi.copy()
        state.Phi[1:-1] += dt * state.Pi[1:-1]
        _boundaries(state, old, dt)
        for m in state.mirrors:
            _drift_mirosc(m, dt)
            if not m.static:
                m.Z += dt * m.P / m.config.M
        state.check_margins()
        _kick(state, 0.5 * dt, state.t + dt)
        state.t += dt
        state.steps += 1
        if state.filter is not None:
            state.filter.maybe_apply(state)
    if not (np.all(np.isfinite(state.Phi)) and np.all(np.isfinite(state.Pi))):
        raise NumericalError(f"lattice field diverged at t = {state.t}")
    return state


# ---------------------------------------------------------------------------
# Relativistic splitting
# ---------------------------------------------------------------------------

def _mirror_rhs_rel(state: SimState, m: MirrorState, y: np.ndarray) -> Tuple[np.ndarray, float, int, float]:
    """Derivatives of (q, p, Z, P) with the field frozen; also the source weight pieces."""
    q, p, Z, P = y
    mp = m.mirosc
    j, f, phiE, phiZ, grad = mirror_reading(state.Phi, state.x_min, state.dx, Z, mp.lam, q)
    meff = m.config.M + p * p / (2 * mp.m) + 0.5 * mp.m * mp.omega**2 * q * q - mp.lam * q * phiE
    E = math.sqrt(P * P + meff * meff)
    W = meff / E
    w0 = m.config.trap_omega0 or 0.0
    dP = W * mp.lam * q * grad - m.config.M * w0**2 * (Z - m.config.z_eq)
    if m.static:
        dZ = 0.0
        dP = 0.0
    else:
        dZ = P / E
    d = np.array([W * p / mp.m, -W * (mp.m * mp.omega**2 * q - mp.lam * phiZ), dZ, dP])
    return d, W * mp.lam * q, j, f


def _flow_potential(state: SimState, h: float, t: float, substeps: int) -> None:
    """Exact-in-structure flow of everything except the field kinetic term, for time h.

    The field is frozen; mirrors follow their Hamilton equations (RK4
    substeps) and Pi accumulates the Laplacian, the drive and the weighted
    point sources integrated along the mirror paths.
    """
    acc = _laplacian(state.Phi, state.dx) * h
    J = _drive_vector(state, t)
    if J is not None:
        acc += J * h
    src = np.zeros(state.n)
    hs = h / substeps
    for m in state.mirrors:
        if m.mirosc.m == 0:
            raise ParameterError("relativistic stepper needs massive mirosc")
        y = np.array([m.q, m.p, m.Z, m.P])
        for _ in range(substeps):
            k1, s1, j1, f1 = _mirror_rhs_rel(state, m, y)
            k2, s2, j2, f2 = _mirror_rhs_rel(state, m, y + 0.5 * hs * k1)
            k3, s3, j3, f3 = _mirror_rhs_rel(state, m, y + 0.5 * hs * k2)
            k4, s4, j4, f4 = _mirror_rhs_rel(state, m, y + hs * k3)
            for wgt, s, j, f in ((1, s1, j1, f1), (2, s2, j2, f2), (2, s3, j3, f3), (1, s4, j4, f4)):
                c = hs * wgt / 6.0 * s / state.dx
                src[j] += (1.0 - f) * c
                src[j + 1] += f * c
            y = y + hs / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not m.static and abs(y[2] - m.Z) > state.dx:
            raise NumericalError("superluminal lattice transport: mirror moved more than dx in one step")
        m.q, m.p, m.Z, m.P = (float(v) for v in y)
    acc += src
    acc[0] = acc[-1] = 0.0
    state.Pi += acc


def _drift_field(state: SimState, h: float) -> None:
    old = state.Phi.copy()
    state.Phi[1:-1] += h * state.Pi[1:-1]
    _boundaries(state, old, h)


_YOSHIDA = (1.0 / (2.0 - 2.0 ** (1.0 / 3.0)),)
_YOSHIDA = (_YOSHIDA[0], -(2.0 ** (1.0 / 3.0)) * _YOSHIDA[0], _YOSHIDA[0])


def step_relativistic(state: SimState, dt: float, n_steps: int = 1, order: int = 2,
                      substeps: int = 2, prescribed_field: Optional[Callable] = None) -> SimState:
    """Advance with the relativistic worldline Hamiltonian.

    ``order`` 2 is a Strang splitting (field drift half, potential flow,
    field drift half); ``order`` 4 composes three such steps (Yoshida).
    With ``prescribed_field(t, x)`` the field is not evolved; Phi is reset
    from the callable each step and Pi is left untouched.
    """
    _check_courant(state, dt)
    if order not in (2, 4):
        raise ParameterError("order must be 2 or 4")
    if state.incident is not None:
        raise ParameterError("incident-wave injection is only supported by step_nonrel")
    coeffs = (1.0,) if order == 2 else _YOSHIDA
    for _ in range(n_steps):
        t = state.t
        for c in coeffs:
            h = c * dt
            if prescribed_field is not None:
                state.Phi = np.asarray(prescribed_field(t + 0.5 * h, state.x), dtype=float)
                saved = state.Pi.copy()
                _flow_potential(state, h, t + 0.5 * h, substeps)
                state.Pi = saved
            else:
                _drift_field(state, 0.5 * h)
                _flow_potential(state, h, t + 0.5 * h, substeps)
                _drift_field(state, 0.5 * h)
            t += h
        state.t += dt
        state.steps += 1
        state.check_margins()
        if state.filter is not None:
            state.filter.maybe_apply(state)
    if not (np.all(np.isfinite(state.Phi)) and np.all(np.isfinite(state.Pi))):
        raise NumericalError(f"lattice field diverged at t = {state.t}")
    return state


# ---------------------------------------------------------------------------
# Runaway suppression for static mirrors
# ---------------------------------------------------------------------------

def runaway_rate(p: MiroscParams) -> float:
    """Growth rate s > 0 of the static runaway of an isolated MOF mirror, 2 m s (s^2 + Omega^2) = lam^2."""
    if p.lam == 0 or p.m == 0:
        return 0.0
    roots = np.roots([2 * p.m, 0.0, 2 * p.m * p.omega**2, -p.lam**2])
    return float(max(r.real for r in roots if abs(r.imag) < 1e-9 * max(1.0, abs(r))))


def step_matrix(state: SimState, dt: float) -> sp.csr_matrix:
    """Homogeneous part of one leapfrog step of a static-mirror lattice, as a sparse matrix.

    State vector ordering: Phi (n), Pi (n), then (q_a, p_a) per mirror.
    Absorbing ends use the characteristic update.  Drives and incident
    injection only add a source term, so they are left out.
    """
    if any(not m.static for m in state.mirrors):
        raise ParameterError("step matrix needs static mirrors")
    n, dx = state.n, state.dx
    N = 2 * n + 2 * len(state.mirrors)
    inner = np.arange(1, n - 1)

    # force part of the half kick
    rows = [n + inner, n + inner, n + inner]
    cols = [inner - 1, inner, inner + 1]
    vals = [np.full(n - 2, 1 / dx**2), np.full(n - 2, -2 / dx**2), np.full(n - 2, 1 / dx**2)]
    for a, m in enumerate(state.mirrors):
        j, f = hat(state, m.Z)
        mp = m.mirosc
        iq, ip = 2 * n + 2 * a, 2 * n + 2 * a + 1
        rows.append(np.array([n + j, n + j + 1, ip, ip, ip]))
        cols.append(np.array([iq, iq, iq, j, j + 1]))
        vals.append(np.array([(1 - f) * mp.lam / dx, f * mp.lam / dx,
                              -mp.m * mp.omega**2 + mp.lam**2 * dx * f * (1 - f),
                              (1 - f) * mp.lam, f * mp.lam]))
    F = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    kick = sp.identity(N, format="csr") + 0.5 * dt * F

    # drift, with the end rows replaced by the boundary update
    keep = np.ones(N)
    keep[[0, n - 1, n, 2 * n - 1]] = 0.0
    rows = [np.arange(N), inner]
    cols = [np.arange(N), n + inner]
    vals = [keep, np.full(n - 2, dt)]
    for a, m in enumerate(state.mirrors):
        iq = 2 * n + 2 * a
        rows.append(np.array([iq]))
        cols.append(np.array([iq + 1]))
        vals.append(np.array([dt / m.mirosc.m]))
    c = (dt - dx) / (dt + dx)
    for side in (0, 1):
        i, nb = (0, 1) if side == 0 else (n - 1, n - 2)
        if state.boundary[side] == REFLECTING:
            continue
        # new_b = old_nb + c (new_nb - old_b) with new_nb = old_nb + dt Pi_nb; Pi_b = (new_b - old_b) / dt
        rows.append(np.array([i, i, i, n + i, n + i, n + i]))
        cols.append(np.array([nb, n + nb, i, nb, n + nb, i]))
        vals.append(np.array([1 + c, c * dt, -c, (1 + c) / dt, c, (-c - 1) / dt]))
    D = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    return (kick @ D @ kick).tocsr()


def _pack(state: SimState) -> np.ndarray:
    parts = [state.Phi, state.Pi]
    for m in state.mirrors:
        parts.append(np.array([m.q, m.p]))
    return np.concatenate(parts)


def _unpack(state: SimState, v: np.ndarray) -> None:
    n = state.n
    state.Phi[:] = v[:n]
    state.Pi[:] = v[n:2 * n]
    for a, m in enumerate(state.mirrors):
        m.q, m.p = float(v[2 * n + 2 * a]), float(v[2 * n + 2 * a + 1])


def _shift_invert(G: sp.spmatrix, sigma: float) -> LinearOperator:
    # the default factorization inside eigs keeps the natural ordering, which fills in badly here
    lu = splu((G - sigma * sp.identity(G.shape[0])).tocsc(), permc_spec="COLAMD")
    return LinearOperator(G.shape, matvec=lu.solve, dtype=float)


def _real_phase(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return (v * abs(v[k]) / v[k]).real


@dataclass
class RunawayFilter:
    """Removes the exponentially growing static modes of MOF mirrors on an open lattice.

    A static MOF mirror in free space has a purely growing solution
    e^{s t - s |x - Z|} with 2 m s (s^2 + Omega^2) = lam^2 (the reflection
    coefficient has a pole at w = i s).  A wave train launched far from the
    mirror overlaps it only by e^{-s d}, but round-off seeds it anyway.  At
    Courant number 1 the lattice adds a slowly growing sawtooth mode with
    eigenvalue just below -1, a discretization artifact vanishing as dx^2.
    The filter holds the unstable right and left eigenvectors of the
    one-step map and projects them out every ``interval`` steps.
    """

    right: np.ndarray
    left: np.ndarray
    eigenvalues: np.ndarray
    interval: int
    removed: List[float] = field(default_factory=list)

    @classmethod
    def build(cls, state: SimState, dt: float, growth_per_interval: float = 10.0) -> "RunawayFilter":
        G = step_matrix(state, dt)
        GT = G.T.tocsr()
        coupled = [m for m in state.mirrors if m.mirosc.lam > 0 and m.mirosc.m > 0]
        rates = [runaway_rate(m.mirosc) for m in coupled]
        targets = []
        for s in sorted(set(rates)):
            # one growing mode per coupled mirror; asking for more drags in the dense continuum near 1
            targets.append((math.exp(s * dt), sum(1 for r in rates if abs(r - s) < 0.5 * s)))
        if coupled and dt >= state.dx * (1 - 1e-12):
            # at Courant number 1 each point coupling can also push a sawtooth mode just past -1
            targets.append((-1.0 - 1e-3, len(coupled)))
        found: List[complex] = []
        R, Lv = [], []
        for sigma, k in targets:
            vals, vecs = eigs(G, k=k, sigma=sigma, which="LM", OPinv=_shift_invert(G, sigma))
            lvals, lvecs = eigs(GT, k=k, sigma=sigma, which="LM", OPinv=_shift_invert(GT, sigma))
            for i, mu in enumerate(vals):
                if abs(mu) <= 1.0 + 1e-10 or any(abs(mu - f) < 1e-9 * abs(mu) for f in found):
                    continue
                if abs(mu.imag) > 1e-9 * abs(mu):
                    raise NumericalError("complex unstable eigenvalue: projection needs its conjugate pair")
                jbest = int(np.argmin(np.abs(lvals - mu)))
                if abs(lvals[jbest] - mu) > 1e-6 * abs(mu):
                    raise NumericalError("left and right unstable eigenvalues do not pair up")
                found.append(mu)
                R.append(_real_phase(vecs[:, i]))
                Lv.append(_real_phase(lvecs[:, jbest]))
        if not found:
            return cls(np.zeros((G.shape[0], 0)), np.zeros((G.shape[0], 0)), np.zeros(0), 1)
        Rm = np.array(R).T
        Lm = np.array(Lv).T
        # biorthogonalize: L^H R = I
        Lm = Lm @ np.linalg.inv(Lm.conj().T @ Rm).conj().T
        rate = max(math.log(abs(mu)) for mu in found) / dt
        interval = max(1, int(math.log(growth_per_interval) / (rate * dt)))
        return cls(Rm, Lm, np.array(found), interval)

    def apply(self, state: SimState) -> float:
        if self.right.shape[1] == 0:
            return 0.0
        v = _pack(state)
        c = self.left.conj().T @ v
        v = v - (self.right @ c).real
        _unpack(state, v)
        amp = float(np.max(np.abs(c)))
        self.removed.append(amp)
        return amp

    def maybe_apply(self, state: SimState) -> None:
        if state.steps % self.interval == 0:
            self.apply(state)


# ---------------------------------------------------------------------------
# Wave packets and scattering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WavePacket:
    """Gaussian packet amplitude * exp(-(x - x0)^2 / 2 sigma^2) cos(omega0 (x - x0))."""

    x0: float
    sigma: float
    omega0: float
    direction: int = 1
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if self.direction not in (1, -1):
            raise ParameterError("direction must be +1 (rightward) or -1 (leftward)")
        if not (self.sigma > 0 and self.omega0 > 0):
            raise ParameterError("sigma and omega0 must be > 0")

    def fields(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Phi and Pi = dPhi/dt at t = 0 for a packet moving in ``direction``."""
        u = x - self.x0
        g = self.amplitude * np.exp(-0.5 * (u / self.sigma) ** 2)
        phi = g * np.cos(self.omega0 * u)
        dphi = g * (-u / self.sigma**2 * np.cos(self.omega0 * u) - self.omega0 * np.sin(self.omega0 * u))
        return phi, -self.direction * dphi

    def energy_spectrum(self, w: np.ndarray) -> np.ndarray:
        """Relative energy density of the packet over frequency (positive w)."""
        return w**2 * (np.exp(-0.5 * (self.sigma * (w - self.omega0)) ** 2)
                       + np.exp(-0.5 * (self.sigma * (w + self.omega0)) ** 2)) ** 2


def packet_reflectance(p: MiroscParams, packet: WavePacket, n: int = 4001) -> float:
    """Continuum energy fraction of ``packet`` reflected by a static mirror (spectrum-weighted |R|^2)."""
    from mofsim.scattering import mof_R

    half = 10.0 / packet.sigma
    w = np.linspace(max(packet.omega0 - half, 1e-9 * packet.omega0), packet.omega0 + half, n)
    S = packet.energy_spectrum(w)
    return float(np.trapezoid(S * np.abs(mof_R(p, w)) ** 2, w) / np.trapezoid(S, w))


@dataclass(frozen=True)
class GridSpec:
    dx: float
    courant: float = 1.0
    runaway_filter: bool = True

    def __post_init__(self) -> None:
        if not (self.dx > 0 and 0 < self.courant <= 1):
            raise ParameterError("grid needs dx > 0 and 0 < courant <= 1")


@dataclass(frozen=True)
class PacketScatter:
    R_num: float
    T_num: float
    residual: float  # energy left near the mirror (mirosc plus local field), as a fraction
    t_measure: float
    energy_in: float


def scatter_wavepacket(p: MiroscParams, packet: WavePacket, grid: GridSpec,
                       tail: Optional[float] = None) -> PacketScatter:
    """Energy fractions reflected and transmitted by a static mirror at x = 0.

    The packet starts at x0 < 0 moving right.  The run stops when the
    reflected and transmitted lobes (plus ``tail``, the ring-down length
    left behind by the oscillator) are clear of the mirror.
    """
    if packet.sigma * packet.omega0 < 20:
        raise ParameterError("packet is not narrowband: need sigma * omega0 >= 20")
    if packet.direction != 1 or packet.x0 >= 0:
        raise ParameterError("packet must start left of the mirror and move right")
    dx = grid.dx
    if packet.sigma < 8 * dx:
        raise ParameterError("packet width must span at least 8 cells")
    d0 = -packet.x0
    if d0 < 5 * packet.sigma:
        raise ParameterError("packet must start >= 5 sigma from the mirror")
    if tail is None:
        decay = 0.25 * p.lam**2 / (p.m * p.omega**2) if p.m > 0 else math.inf
        tail = 12.0 / decay if decay > 0 else 0.0
    sep = 6.0 * packet.sigma
    t_meas = d0 + sep + tail
    x_lo = min(packet.x0, -(t_meas - d0)) - sep - 16 * dx
    x_hi = t_meas - d0 + sep + 16 * dx
    cfg = MirrorConfig(p, M=1.0)
    mirror = MirrorState(cfg, Z=0.0, static=True)
    x_lo = dx * math.floor(x_lo / dx)
    state = make_lattice(x_lo, dx * math.ceil(x_hi / dx), dx, [mirror])
    state.Phi, state.Pi = packet.fields(state.x)
    state.Phi[0] = state.Phi[-1] = state.Pi[0] = state.Pi[-1] = 0.0
    E0 = field_energy(state)
    dt = grid.courant * dx
    if grid.runaway_filter and p.lam > 0 and p.m > 0:
        state.filter = RunawayFilter.build(state, dt)
    n = int(math.ceil(t_meas / dt))
    step_nonrel(state, dt, n)
    j0 = int(round((0.0 - state.x_min) / dx))
    # lobes must be clear of the mirror region and of the lattice ends
    guard = int(math.ceil(2 * packet.sigma / dx))
    left = field_energy(state, 1, j0 - guard)
    right = field_energy(state, j0 + guard, state.n - 1)
    near = field_energy(state, j0 - guard, j0 + guard)
    if near > 1e-3 * E0:
        raise NumericalError("reflected and transmitted lobes have not separated from the mirror")
    resid = total_energy_nonrel(state) - left - right
    return PacketScatter(left / E0, right / E0, resid / E0, state.t, E0)


# ---------------------------------------------------------------------------
# Monochromatic steady-state probes
# ---------------------------------------------------------------------------

def demodulate(samples: np.ndarray, times: np.ndarray, omega: float) -> complex:
    """Complex amplitude c of a signal c e^{-i w t} + c.c. over whole periods."""
    period = 2 * math.pi / omega
    span = times[-1] - times[0]
    n_per = int(span / period)
    if n_per < 1:
        raise NumericalError("demodulation window shorter than one period")
    mask = times <= times[0] + n_per * period
    t, s = times[mask], samples[mask]
    w = np.ones_like(t)
    w[0] = w[-1] = 0.5
    return complex(np.sum(w * s * np.exp(1j * omega * t)) / np.sum(w))


def right_moving(state: SimState, i: int) -> float:
    """Characteristic Pi - dPhi/dx at node i; only the right-moving part f(t - x) contributes."""
    grad = (state.Phi[i + 1] - state.Phi[i - 1]) / (2 * state.dx)
    return state.Pi[i] - grad


def left_moving(state: SimState, i: int) -> float:
    grad = (state.Phi[i + 1] - state.Phi[i - 1]) / (2 * state.dx)
    return state.Pi[i] + grad


@dataclass(frozen=True)
class SteadyProbe:
    """Plane-wave amplitudes at probe points, relative to the incident wave.

    With the incident wave written as Re(e^{i w (x - t)}), the field near
    x is Re((a e^{i w x} + b e^{-i w x}) e^{-i w t}); ``right`` holds a and
    ``left`` holds b.
    """

    x: np.ndarray
    right: np.ndarray
    left: np.ndarray
    t_end: float


def probe_steady_state(mirrors: Sequence[Tuple[MiroscParams, float]], omega: float, dx: float,
                       probes: Sequence[float], t_settle: float, n_periods: int = 10,
                       pad: float = 2.0, runaway_filter: bool = True) -> SteadyProbe:
    """Drive static mirrors with a monochromatic wave from the left and demodulate at ``probes``.

    The wave is injected through the absorbing left end (ramped over five
    periods), the run continues for ``t_settle`` beyond the transit to the
    farthest probe, then ``n_periods`` are demodulated.  Courant number is 1.
    """
    if not (omega > 0 and dx > 0 and t_settle >= 0):
        raise ParameterError("need omega > 0, dx > 0, t_settle >= 0")
    zs = [z for _, z in mirrors] + list(probes)
    x_lo = dx * math.floor((min(zs) - pad) / dx)
    x_hi = dx * math.ceil((max(zs) + pad) / dx)
    states = [MirrorState(MirrorConfig(p, 1.0), Z=z, static=True) for p, z in mirrors]
    state = make_lattice(x_lo, x_hi, dx, states, incident=IncidentWave(omega, 1.0, x_ref=x_lo))
    dt = dx
    if runaway_filter and any(p.lam > 0 and p.m > 0 for p, _ in mirrors):
        state.filter = RunawayFilter.build(state, dt)
    idx = [int(round((x - x_lo) / dx)) for x in probes]
    t_ramp = 5 * 2 * math.pi / omega
    step_nonrel(state, dt, int(math.ceil((t_ramp + (x_hi - x_lo) + t_settle) / dt)))
    n_rec = int(math.ceil(n_periods * 2 * math.pi / omega / dt)) + 1
    times = np.empty(n_rec)
    rs = np.empty((n_rec, len(idx)))
    ls = np.empty((n_rec, len(idx)))
    for k in range(n_rec):
        times[k] = state.t
        rs[k] = [right_moving(state, i) for i in idx]
        ls[k] = [left_moving(state, i) for i in idx]
        step_nonrel(state, dt)
    xs = x_lo + dx * np.array(idx)
    # incident Re(e^{-i w x_lo} e^{i w (x - t)}): a_inc = e^{-i w x_lo}
    a_inc = np.exp(-1j * omega * x_lo)
    right = np.array([1j * demodulate(rs[:, c], times, omega) * np.exp(-1j * omega * xs[c]) / omega
                      for c in range(len(idx))]) / a_inc
    left = np.array([1j * demodulate(ls[:, c], times, omega) * np.exp(1j * omega * xs[c]) / omega
                     for c in range(len(idx))]) / a_inc
    return SteadyProbe(xs, right, left, state.t)


# ---------------------------------------------------------------------------
# Checkpoints and snapshots
# ---------------------------------------------------------------------------

def write_field_csv(fh, state: SimState, header: bool = True) -> None:
    """Append rows (t, x_i, Phi_i)."""
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(["t", "x", "Phi"])
    for x, phi in zip(state.x, state.Phi):
        w.writerow([repr(float(state.t)), repr(float(x)), repr(float(phi))])


def write_mirror_csv(fh, state: SimState, header: bool = True) -> None:
    """Append rows (t, a, q_a, p_a, Z_a, P_a)."""
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(["t", "mirror", "q", "p", "Z", "P"])
    for a, m in enumerate(state.mirrors):
        w.writerow([repr(float(state.t)), a] + [repr(float(v)) for v in (m.q, m.p, m.Z, m.P)])


_MAGIC = b"MOFSIMCK"
_VERSION = 1


def save_checkpoint(state: SimState, fh) -> None:
    """Binary checkpoint: magic, version, header scalars, mirror table, raw arrays (little-endian)."""
    b0 = 0 if state.boundary[0] == ABSORBING else 1
    b1 = 0 if state.boundary[1] == ABSORBING else 1
    fh.write(_MAGIC)
    fh.write(struct.pack("<IIIdddqBB", _VERSION, state.n, len(state.mirrors), state.x_min, state.dx,
                         state.t, state.steps, b0, b1))
    for m in state.mirrors:
        c = m.config
        w0 = math.nan if c.trap_omega0 is None else c.trap_omega0
        fh.write(struct.pack("<9dB", c.mirosc.m, c.mirosc.omega, c.mirosc.lam, c.M, c.z_eq, w0,
                             m.q, m.p, m.Z, 0))
        fh.write(struct.pack("<dB", m.P, 1 if m.static else 0))
    fh.write(state.Phi.astype("<f8").tobytes())
    fh.write(state.Pi.astype("<f8").tobytes())


def load_checkpoint(fh) -> SimState:
    if fh.read(len(_MAGIC)) != _MAGIC:
        raise ParameterError("not a checkpoint file")
    head = struct.Struct("<IIIdddqBB")
    version, n, nm, x_min, dx, t, steps, b0, b1 = head.unpack(fh.read(head.size))
    if version != _VERSION:
        raise ParameterError(f"unsupported checkpoint version {version}")
    mirrors = []
    rec = struct.Struct("<9dB")
    tail = struct.Struct("<dB")
    for _ in range(nm):
        m, om, lam, M, z_eq, w0, q, p, Z, _pad = rec.unpack(fh.read(rec.size))
        P, static = tail.unpack(fh.read(tail.size))
        cfg = MirrorConfig(MiroscParams(m, om, lam), M, z_eq, None if math.isnan(w0) else w0)
        mirrors.append(MirrorState(cfg, q, p, Z, P, bool(static)))
    Phi = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(float)
    Pi = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(float)
    bnd = tuple(ABSORBING if b == 0 else REFLECTING for b in (b0, b1))
    return SimState(x_min, dx, Phi, Pi, mirrors, t=t, boundary=bnd, steps=steps)
