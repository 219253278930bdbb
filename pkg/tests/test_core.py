import math

import pytest

from mofsim.core import (
    DriveParams,
    MiroscParams,
    MirrorConfig,
    ParameterError,
    bc_gamma,
    plasma_frequency,
    rp_index,
)


def test_rp_index_of_reference_mirror():
    lam = math.sqrt(4000 / 3**1.5)
    p = MiroscParams(1.0, 10.0, lam)
    assert rp_index(p) == pytest.approx(1.0, rel=1e-14)
    assert plasma_frequency(p) == pytest.approx(10.0, rel=1e-14)


def test_rp_index_times_plasma_frequency_is_omega():
    p = MiroscParams(0.3, 7.0, 2.5)
    assert rp_index(p) * plasma_frequency(p) == pytest.approx(p.omega, rel=1e-14)


def test_bc_gamma_from_params_and_from_kappa():
    p = MiroscParams(2.0, 3.0, 6.0)
    assert bc_gamma(p) == pytest.approx(36.0 / (2 * 18.0))
    assert bc_gamma(kappa=18.0, lam=6.0) == bc_gamma(p)


@pytest.mark.parametrize("kwargs", [
    dict(m=-1.0, omega=1.0, lam=1.0),
    dict(m=1.0, omega=0.0, lam=1.0),
    dict(m=1.0, omega=1.0, lam=-0.1),
    dict(m=float("nan"), omega=1.0, lam=1.0),
    dict(m=1.0, omega=float("inf"), lam=1.0),
])
def test_mirosc_rejects_bad_values(kwargs):
    with pytest.raises(ParameterError):
        MiroscParams(**kwargs)


def test_mirror_and_drive_validation():
    p = MiroscParams(1.0, 1.0, 1.0)
    with pytest.raises(ParameterError):
        MirrorConfig(p, M=0.0)
    with pytest.raises(ParameterError):
        MirrorConfig(p, M=1.0, trap_omega0=-1.0)
    with pytest.raises(ParameterError):
        DriveParams(A=1.0, omega_D=0.0)
    assert MirrorConfig(p, 1.0).is_free
    assert not MirrorConfig(p, 1.0, trap_omega0=2.0).is_free


def test_degenerate_limits_raise():
    with pytest.raises(ParameterError):
        plasma_frequency(MiroscParams(0.0, 1.0, 1.0))
    with pytest.raises(ParameterError):
        rp_index(MiroscParams(1.0, 1.0, 0.0))
    with pytest.raises(ParameterError):
        bc_gamma()
    with pytest.raises(ParameterError):
        MiroscParams(0.0, 1.0, 0.0).require_scatterable()
