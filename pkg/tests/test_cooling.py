import math
import warnings

import numpy as np
import pytest

from mofsim.core import DriveParams, MiroscParams, MirrorConfig, ParameterError
from mofsim.cooling import (
    CoolingCoefficients,
    CoolingSetup,
    cooling_coefficients,
    drive_amplitudes,
    drive_curvature_amplitude,
    driven_field,
    evolve_averaged,
    evolve_full_delay,
    kernel_D,
    q0_steady,
)
from oracles import cooling_mode, fit_damped


def weak_setup(ratio=2.0, L=0.3, A=8.0, omega0=None, Omega=10.0, eps=0.01, M=1.0):
    lam = math.sqrt(eps * Omega**3)
    w0 = 0.01 / L if omega0 is None else omega0
    return CoolingSetup(MirrorConfig(MiroscParams(1.0, Omega, lam), M, 0.0, w0), L,
                        DriveParams(A, ratio * Omega))


def test_kernel_zero_frequency_limit():
    p = MiroscParams(1.0, 5.0, 1.0)
    L = 0.4
    assert kernel_D(1e-7, p, L) == pytest.approx(kernel_D(0.0, p, L), rel=1e-6)
    assert kernel_D(0.0, p, L) == pytest.approx(1.0 / (p.kappa - p.lam**2 * L))


def test_kernel_is_vectorised_and_conjugate_symmetric():
    p = MiroscParams(1.0, 5.0, 1.0)
    w = np.array([0.3, 1.7, 6.0])
    D = kernel_D(w, p, 0.4)
    assert D.shape == (3,)
    assert np.allclose(kernel_D(-w, p, 0.4), np.conj(D))


def test_drive_amplitudes_reproduce_field():
    d = DriveParams(2.0, 7.0)
    L = 0.37
    a, ap = drive_amplitudes(d, L)
    t = np.linspace(0, 3, 17)
    F = driven_field(d, t, L)
    assert np.allclose(F, 2 * (a * np.exp(-1j * d.omega_D * t)).real, atol=1e-14)
    h = 1e-5
    Fx = (driven_field(d, t, L + h) - driven_field(d, t, L - h)) / (2 * h)
    assert np.allclose(Fx, 2 * (ap * np.exp(-1j * d.omega_D * t)).real, atol=1e-8)
    Fxx = (driven_field(d, t, L + h) - 2 * F + driven_field(d, t, L - h)) / h**2
    curv = drive_curvature_amplitude(d, L)
    assert np.allclose(Fxx, 2 * (curv * np.exp(-1j * d.omega_D * t)).real, atol=1e-4)


def test_driven_field_vanishes_at_perfect_mirror():
    d = DriveParams(2.0, 7.0)
    assert np.allclose(driven_field(d, np.linspace(0, 4, 9), 0.0), 0.0)


def test_steady_mirosc_amplitude():
    s = weak_setup()
    a, _ = drive_amplitudes(s.drive, s.L)
    assert q0_steady(s.mirosc, s.drive, s.L) == pytest.approx(
        s.mirosc.lam * a * kernel_D(s.drive.omega_D, s.mirosc, s.L))


def test_damping_sign_follows_round_trip_phase():
    base = weak_setup()
    for L in np.linspace(0.2, 0.5, 31):
        c = cooling_coefficients(base.with_length(L))
        cos2 = math.cos(2 * base.drive.omega_D * L)
        if abs(cos2) > 1e-6:
            assert np.sign(c.Gamma) == np.sign(cos2)


def test_effective_frequency_matches_linear_response():
    s = weak_setup()
    c = cooling_coefficients(s)
    p = s.mirosc
    nu = cooling_mode(p.m, p.omega, p.lam, s.mirror.M, s.omega0, s.drive.omega_D, s.drive.A, s.L)
    assert not c.unstable
    assert c.effective_frequency == pytest.approx(nu.real, rel=1e-3)


def test_strong_coupling_is_flagged():
    s = weak_setup(eps=0.5)
    assert any("not weak" in w for w in cooling_coefficients(s).warnings)


def test_averaged_trajectory_is_damped_oscillator():
    s = weak_setup()
    c = cooling_coefficients(s)
    c = CoolingCoefficients(c.F_rad, c.dOmega2, 2e-3, c.effective_frequency, False)
    w = c.effective_frequency
    tr = evolve_averaged(s, c, 0.01, 0.0, 200.0, 0.05)
    Zeq = c.F_rad / (s.mirror.M * w**2)
    g = c.Gamma / (2 * s.mirror.M)
    wd = math.sqrt(w**2 - g**2)
    t = tr.times
    exact = Zeq + np.exp(-g * t) * ((0.01 - Zeq) * np.cos(wd * t) + g * (0.01 - Zeq) / wd * np.sin(wd * t))
    assert np.max(np.abs(tr.Z - exact)) < 1e-9


def test_averaged_step_must_resolve_period():
    s = weak_setup()
    c = cooling_coefficients(s)
    with pytest.raises(ParameterError):
        evolve_averaged(s, c, 0.0, 0.0, 100.0, 5.0)


def test_full_delay_step_must_resolve_round_trip():
    s = weak_setup()
    with pytest.raises(ParameterError):
        evolve_full_delay(s, 0.0, 0.0, 10.0, s.L)


def test_full_delay_tracks_linear_response_mode():
    s = weak_setup(L=0.3, A=20.0, omega0=1 / 0.3)
    p = s.mirosc
    nu = cooling_mode(p.m, p.omega, p.lam, s.mirror.M, s.omega0, s.drive.omega_D, s.drive.A, s.L)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        tr = evolve_full_delay(s, 1e-3 * s.L, 0.0, 6000.0, s.L / 10)
    decay, freq = fit_damped(tr.times, tr.Z)
    assert freq == pytest.approx(nu.real, rel=1e-3)
    assert -decay == pytest.approx(nu.imag, rel=0.1)


def test_full_delay_caps_large_excursions():
    s = weak_setup(L=0.3, A=20.0, omega0=1 / 0.3)
    with pytest.warns(UserWarning, match="exceeded"):
        tr = evolve_full_delay(s, 0.5 * s.L, 0.0, 10.0, s.L / 10)
    assert tr.metadata["capped_at"] is not None
