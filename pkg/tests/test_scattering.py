import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mofsim.core import MiroscParams, ParameterError, bc_gamma
from mofsim.scattering import (
    bc_R,
    bc_scatter,
    mof_R,
    mof_reflectivity_spectrum,
    mof_scatter,
    mof_to_bc_convergence,
)
from oracles import bc_matching, single_mirror_matching

pos = st.floats(min_value=1e-2, max_value=1e2)


def test_worked_example_phase():
    r = mof_scatter(MiroscParams(1.0, 2.0, 3.0), 1.0)
    assert r.R == pytest.approx((-9 + 6j) / 13, abs=1e-15)
    assert r.T == pytest.approx(1 + r.R, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(m=pos, omega=pos, lam=pos, w=pos)
def test_matches_matching_system(m, omega, lam, w):
    if abs(omega - w) < 1e-6 * omega:
        return
    R, T, A = single_mirror_matching(m, omega, lam, w)
    r = mof_scatter(MiroscParams(m, omega, lam), w)
    assert abs(r.R - R) < 1e-9
    assert abs(r.T - T) < 1e-9
    assert abs(r.A - A) <= 1e-9 * max(1.0, abs(A))


@settings(max_examples=200, deadline=None)
@given(m=pos, omega=pos, lam=pos, w=pos)
def test_unitarity_and_continuity(m, omega, lam, w):
    r = mof_scatter(MiroscParams(m, omega, lam), w)
    assert abs(abs(r.R) ** 2 + abs(r.T) ** 2 - 1) < 1e-12
    assert abs(1 + r.R - r.T) < 1e-12


@settings(max_examples=100, deadline=None)
@given(gamma=pos, w=pos)
def test_bc_matches_delta_matching(gamma, w):
    R, T = bc_matching(gamma, w)
    r = bc_scatter(gamma, w)
    assert abs(r.R - R) < 1e-12 and abs(r.T - T) < 1e-12
    assert abs(r.reflectivity + r.transmissivity - 1) < 1e-12


def test_resonance_is_total_reflection():
    p = MiroscParams(1.0, 4.0, 0.5)
    r = mof_scatter(p, 4.0)
    assert r.R == -1
    assert r.T == 0
    assert r.resonant and r.A is None


def test_massless_mirosc_is_perfect_mirror():
    r = mof_scatter(MiroscParams(0.0, 1.0, 1.0), 3.0)
    assert r.R == -1 and r.T == 0


def test_decoupled_mirror_is_transparent():
    r = mof_scatter(MiroscParams(1.0, 1.0, 0.0), 3.0)
    assert r.R == 0 and r.T == 1


def test_spectrum_matches_pointwise_and_is_vectorised():
    p = MiroscParams(1.3, 2.0, 1.7)
    y = np.linspace(0.05, 3.0, 61)
    refl = mof_reflectivity_spectrum(p, y)
    ref = np.abs(mof_R(p, y * p.omega)) ** 2
    assert np.allclose(refl, ref, rtol=1e-12, atol=0)
    with pytest.raises(ParameterError):
        mof_reflectivity_spectrum(p, [0.0, 1.0])


def test_spectrum_low_frequency_limit():
    p = MiroscParams(1.0, 10.0, 5.0)
    assert mof_reflectivity_spectrum(p, [1e-9])[0] == pytest.approx(1.0, abs=1e-12)


def test_bc_convergence_shrinks_with_mass():
    kappa, lam = 2.0, 1.5
    w = np.linspace(0.1, 5.0, 200)
    dev = mof_to_bc_convergence(kappa, lam, w, [1e-2, 1e-4, 1e-6])
    assert np.all(np.diff(dev) < 0)
    assert dev[-1] < 1e-5
    assert np.allclose(bc_R(bc_gamma(kappa=kappa, lam=lam), w),
                       [bc_scatter(lam**2 / (2 * kappa), x).R for x in w])


@pytest.mark.parametrize("bad", [dict(m_sequence=[1.0, 2.0]), dict(m_sequence=[]), dict(m_sequence=[1.0, -1.0])])
def test_bc_convergence_rejects_bad_sequence(bad):
    with pytest.raises(ParameterError):
        mof_to_bc_convergence(1.0, 1.0, 1.0, **bad)


def test_scatter_rejects_bad_frequency():
    with pytest.raises(ParameterError):
        mof_scatter(MiroscParams(1, 1, 1), 0.0)
    with pytest.raises(ParameterError):
        bc_scatter(1.0, -1.0)
    with pytest.raises(ParameterError):
        mof_scatter(MiroscParams(0.0, 1.0, 0.0), 1.0)


def test_minimum_reflectivity_sits_where_the_polynomial_peaks():
    lam = math.sqrt(4000 / 3**1.5)
    p = MiroscParams(1.0, 10.0, lam)
    y = np.linspace(0.01, 0.99, 9801)
    refl = mof_reflectivity_spectrum(p, y)
    assert abs(y[np.argmin(refl)] - 1 / math.sqrt(3)) <= 1e-4
