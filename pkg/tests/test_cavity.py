import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mofsim.cavity import (
    CavityConfig,
    adiabatic_effective_source,
    boxed_mode_function,
    cavity_modes_boxed,
    nx_coupling,
    two_mirror_scatter,
)
from mofsim.core import MiroscParams, MirrorConfig, NumericalError, ParameterError
from mofsim.scattering import mof_scatter
from oracles import two_mirror_matching

pos = st.floats(min_value=0.05, max_value=20.0)


def cavity(p1, p2, L):
    return CavityConfig(MirrorConfig(MiroscParams(*p1), 1.0), MirrorConfig(MiroscParams(*p2), 1.0), L)


@settings(max_examples=150, deadline=None)
@given(m1=pos, o1=pos, l1=pos, m2=pos, o2=pos, l2=pos, L=pos, w=pos)
def test_multiple_reflection_sum_matches_matching_system(m1, o1, l1, m2, o2, l2, L, w):
    if min(abs(w - o1) / o1, abs(w - o2) / o2) < 1e-6:
        return
    B, C, D, E, A1, A2 = two_mirror_matching((m1, o1, l1), (m2, o2, l2), L, w)
    try:
        s = two_mirror_scatter(cavity((m1, o1, l1), (m2, o2, l2), L), w)
    except NumericalError:
        return
    scale = max(1.0, abs(C), abs(D))
    assert abs(s.psi[0][1] - B) < 1e-8 * scale
    assert abs(s.psi[1][0] - C) < 1e-8 * scale
    assert abs(s.psi[1][1] - D) < 1e-8 * scale
    assert abs(s.psi[2][0] - E) < 1e-8 * scale
    assert abs(s.A1 - A1) < 1e-8 * max(1.0, abs(A1))
    assert abs(s.A2 - A2) < 1e-8 * max(1.0, abs(A2))


@settings(max_examples=150, deadline=None)
@given(m1=pos, o1=pos, l1=pos, m2=pos, o2=pos, l2=pos, L=pos, w=pos)
def test_two_mirror_unitarity(m1, o1, l1, m2, o2, l2, L, w):
    try:
        s = two_mirror_scatter(cavity((m1, o1, l1), (m2, o2, l2), L), w)
    except NumericalError:
        return
    R, T = s.psi[0][1], s.psi[2][0]
    assert abs(abs(R) ** 2 + abs(T) ** 2 - 1) < 1e-12
    for r, t in ((s.R1, s.T1), (s.R2, s.T2)):
        assert abs(abs(r) ** 2 + abs(t) ** 2 - 1) < 1e-12


def test_single_mirror_coefficients_carry_position_phase():
    c = cavity((1, 2, 1), (0.5, 3, 2), 0.7)
    s = two_mirror_scatter(c, 1.1)
    r2 = mof_scatter(c.mirror2.mirosc, 1.1).R
    assert s.R2 == pytest.approx(r2 * np.exp(2j * 1.1 * 0.7))
    assert s.T2 == pytest.approx(1 + r2)
    assert s.interior_enhancement == pytest.approx(abs(s.T1 / (1 - s.R1 * s.R2)))


def test_field_is_continuous_at_the_mirrors():
    c = cavity((1, 2, 1), (0.5, 3, 2), 0.7)
    s = two_mirror_scatter(c, 1.1)
    eps = 1e-12
    for x in (0.0, 0.7):
        lo, hi = s.evaluate([x - eps, x + eps])
        assert abs(lo - hi) < 1e-9


def test_cavity_requires_positive_length():
    p = MirrorConfig(MiroscParams(1, 1, 1), 1.0)
    with pytest.raises(ParameterError):
        CavityConfig(p, p, 0.0)
    with pytest.raises(ParameterError):
        two_mirror_scatter(CavityConfig(p, p, 1.0), 0.0)


def strong_cavity(gL, L=1.0, X=3.3):
    kappa = 1.0
    lam = math.sqrt(gL / L * kappa)
    p = MiroscParams(kappa, 1.0, lam)
    c = CavityConfig(MirrorConfig(p, 1.0), MirrorConfig(p, 1.0), L)
    return c, X


def test_boxed_modes_are_roots_with_unit_norm_and_orthogonal():
    c, X = strong_cavity(20.0)
    modes = cavity_modes_boxed(c, X, 12)
    x = np.linspace(0, X, 400001)
    U = np.array([m.u(x) for m in modes])
    gram = np.trapezoid(U[:, None, :] * U[None, :, :], x, axis=2)
    assert np.allclose(gram, np.eye(len(modes)), atol=1e-6)
    for m in modes:
        assert abs(boxed_mode_function(m.k, m.L, m.X, m.g)) < 1e-9 * m.k
        assert m.jump_residual() < 1e-9
    ks = [m.k for m in modes]
    assert np.all(np.diff(ks) > 0)


@pytest.mark.parametrize("gL", [1e2, 1e3, 1e4])
def test_strong_mirror_confines_interior_modes(gL):
    c, X = strong_cavity(gL)
    modes = cavity_modes_boxed(c, X, 12)
    interior = sorted((m for m in modes if m.interior_weight > 0.5), key=lambda m: m.k)
    assert len(interior) >= 2
    for n, m in enumerate(interior[:2], start=1):
        assert abs(m.k - n * math.pi) / (n * math.pi) < 10.0 / gL


def test_nx_coupling_is_frequency_slope():
    p = MiroscParams(1.0, 3.0, 2.0)
    mc = MirrorConfig(p, 1.0)

    def ks(L):
        return np.array([m.k for m in cavity_modes_boxed(CavityConfig(mc, mc, L), 5.0, 6)])

    L, h = 1.3, 1e-5
    slope = (ks(L + h) ** 2 - ks(L - h) ** 2) / (2 * h)
    g = np.array([nx_coupling(m, p) for m in cavity_modes_boxed(CavityConfig(mc, mc, L), 5.0, 6)])
    assert np.allclose(slope, -4 * g, rtol=1e-6)


def test_nx_coupling_vanishes_without_coupling():
    p0 = MiroscParams(1.0, 3.0, 0.0)
    p = MiroscParams(1.0, 3.0, 2.0)
    c = CavityConfig(MirrorConfig(p, 1.0), MirrorConfig(p0, 1.0), 1.0)
    mode = cavity_modes_boxed(c, 3.0, 1)[0]
    assert nx_coupling(mode, p0) == 0.0
    assert mode.k == pytest.approx(math.pi / 3.0)


def test_adiabatic_source_matches_forced_oscillator():
    p = MiroscParams(2.0, 10.0, 3.0)
    nu = 0.3
    t = np.linspace(0, 20, 101)
    phi = np.cos(nu * t)
    exact = p.lam * phi / (p.kappa - p.m * nu**2)
    approx = adiabatic_effective_source(phi, -nu**2 * phi, p)
    assert np.max(np.abs(approx - exact)) < 2 * (nu / p.omega) ** 4 * p.lam / p.kappa


def test_box_must_contain_cavity():
    c, _ = strong_cavity(10.0)
    with pytest.raises(ParameterError):
        cavity_modes_boxed(c, 0.5, 3)
    with pytest.raises(ParameterError):
        cavity_modes_boxed(c, 3.0, 0)
