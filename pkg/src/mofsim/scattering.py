"""Single-mirror scattering: mirror-oscillator-field (MOF) and BC models.

Both models are solved for a wave ``e^{i w x}`` incident from the left on a
mirror at x = 0, with time dependence ``e^{-i w t}``.  In this convention the
field jump ``-phi'(0+) + phi'(0-) = lam * q`` gives

    R = i lam^2 / (2 m w (Omega^2 - w^2) - i lam^2),   T = 1 + R.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from mofsim.core import MiroscParams, ParameterError, ScatterResult, bc_gamma


def mof_denominator(p: MiroscParams, omega):
    return 2.0 * p.m * omega * (p.omega**2 - omega**2) - 1j * p.lam**2


def mof_R(p: MiroscParams, omega):
    """Vectorised MOF reflection coefficient."""
    omega = np.asarray(omega, dtype=float)
    return 1j * p.lam**2 / mof_denominator(p, omega)


def mof_scatter(p: MiroscParams, omega: float) -> ScatterResult:
    """Reflection, transmission and oscillator amplitude for one MOF mirror."""
    p.require_scatterable()
    omega = float(omega)
    if not omega > 0:
        raise ParameterError(f"omega must be > 0, got {omega}")
    den = mof_denominator(p, omega)
    R = 1j * p.lam**2 / den
    T = 2.0 * p.m * omega * (p.omega**2 - omega**2) / den
    detuning = p.m * (p.omega**2 - omega**2)
    if detuning == 0.0:
        return ScatterResult(R=complex(R), T=complex(T), A=None, resonant=True)
    return ScatterResult(R=complex(R), T=complex(T), A=complex(p.lam * T / detuning))


def mof_reflectivity_spectrum(p: MiroscParams, y_grid: Iterable[float]) -> np.ndarray:
    """|R|^2 on a grid of y = w / Omega."""
    p.require_scatterable()
    y = np.asarray(list(y_grid) if not isinstance(y_grid, np.ndarray) else y_grid, dtype=float)
    if np.any(~(y > 0)):
        raise ParameterError("reflectivity spectrum needs y > 0 (y = 0 is a limit, not a point)")
    if p.lam == 0.0:
        return np.zeros_like(y)
    s = 2.0 * p.m * p.omega**3 * y * (1.0 - y**2) / p.lam**2
    return 1.0 / (1.0 + s * s)


def bc_scatter(gamma: float, omega: float) -> ScatterResult:
    """BC mirror with surface coupling gamma, from the jump condition
    ``-phi'(0+) + phi'(0-) = 2 gamma phi(0)``."""
    gamma = float(gamma)
    omega = float(omega)
    if not gamma >= 0:
        raise ParameterError(f"gamma must be >= 0, got {gamma}")
    if not omega > 0:
        raise ParameterError(f"omega must be > 0, got {omega}")
    den = omega - 1j * gamma
    return ScatterResult(R=complex(1j * gamma / den), T=complex(omega / den))


def bc_R(gamma: float, omega):
    omega = np.asarray(omega, dtype=float)
    return 1j * gamma / (omega - 1j * gamma)


def mof_to_bc_convergence(kappa: float, lam: float, omega, m_sequence: Sequence[float]) -> np.ndarray:
    """Deviation |R_MOF - R_BC| for each mass in ``m_sequence`` at fixed kappa.

    ``omega`` may be a scalar or a grid; for a grid the maximum over the grid
    is returned per mass.
    """
    kappa = float(kappa)
    if not kappa > 0:
        raise ParameterError(f"kappa must be > 0, got {kappa}")
    ms = np.asarray(m_sequence, dtype=float)
    if ms.ndim != 1 or ms.size == 0 or np.any(ms <= 0):
        raise ParameterError("m_sequence must be a non-empty list of positive masses")
    if np.any(np.diff(ms) >= 0):
        raise ParameterError("m_sequence must be strictly decreasing")
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    if np.any(w <= 0):
        raise ParameterError("omega must be > 0")
    gamma = bc_gamma(kappa=kappa, lam=lam)
    r_bc = bc_R(gamma, w)
    out = np.empty(ms.size)
    for i, m in enumerate(ms):
        p = MiroscParams(m=m, omega=np.sqrt(kappa / m), lam=lam)
        out[i] = np.max(np.abs(mof_R(p, w) - r_bc))
    return out
