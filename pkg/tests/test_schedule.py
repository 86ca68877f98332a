import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from guidance_lab.errors import DomainError, KindMismatchError
from guidance_lab.schedule import (
    NoiseSchedule, ScheduleKind, beta, coefficient_table, drift_coefficient, integrated_beta,
    marginal_coefficients, reparam_time, score_bound_envelope, ve_sigma, vp_coefficients,
)

SCHEDULES = [
    NoiseSchedule.vp_linear(),
    NoiseSchedule.vp_linear(0.5, 5.0, t_max=3.0),
    NoiseSchedule.vp_constant(0.7, t_max=2.0),
    NoiseSchedule.canonical_ou(),
]


@pytest.mark.parametrize("sched", SCHEDULES, ids=lambda s: f"{s.kind.value}-{s.t_max}")
def test_integrated_beta_matches_quadrature(sched):
    for t in np.linspace(0.0, sched.t_max, 13):
        expected, _ = quad(lambda r: beta(sched, r), 0.0, t, epsabs=1e-14, epsrel=1e-13)
        assert integrated_beta(sched, t) == pytest.approx(expected, rel=1e-12, abs=1e-14)


def test_canonical_ou_coefficients():
    sched = NoiseSchedule.canonical_ou()
    for t in [0.01, 0.5, 1.0, 2.0, 5.0]:
        alpha, sigma = vp_coefficients(sched, t)
        assert alpha == pytest.approx(math.exp(-t), rel=1e-15)
        assert sigma ** 2 == pytest.approx(1 - math.exp(-2 * t), rel=1e-14)


def test_small_t_sigma_keeps_precision():
    sched = NoiseSchedule.vp_linear()
    t = 1e-10
    mpmath.mp.dps = 50
    integral = mpmath.mpf(0.1) * t + mpmath.mpf(0.5) * (20 - mpmath.mpf(0.1)) * mpmath.mpf(t) ** 2
    exact = float(mpmath.sqrt(1 - mpmath.exp(-integral)))
    assert vp_coefficients(sched, t)[1] == pytest.approx(exact, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0))
def test_vp_variance_preserving(t):
    alpha, sigma = vp_coefficients(NoiseSchedule.vp_linear(), t)
    assert alpha ** 2 + sigma ** 2 == pytest.approx(1.0, abs=1e-14)
    assert 0.0 <= sigma <= 1.0 and 0.0 < alpha <= 1.0


@pytest.mark.parametrize("sched", SCHEDULES, ids=lambda s: f"{s.kind.value}-{s.t_max}")
def test_drift_is_log_derivative_of_alpha(sched):
    h = 1e-6
    for t in np.linspace(0.1, sched.t_max - 0.1, 7):
        fd = (math.log(vp_coefficients(sched, t + h)[0]) - math.log(vp_coefficients(sched, t - h)[0])) / (2 * h)
        assert drift_coefficient(sched, t) == pytest.approx(fd, rel=1e-7)


def test_ve_endpoints_and_diffusion():
    sched = NoiseSchedule.ve_geometric(0.01, 50.0)
    assert ve_sigma(sched, 0.0) == pytest.approx(0.01, rel=1e-15)
    assert ve_sigma(sched, 1.0) == pytest.approx(50.0, rel=1e-14)
    alpha, sigma = marginal_coefficients(sched, 0.4)
    assert alpha == 1.0 and sigma == ve_sigma(sched, 0.4)
    h = 1e-6
    for t in [0.1, 0.5, 0.9]:
        fd = (ve_sigma(sched, t + h) ** 2 - ve_sigma(sched, t - h) ** 2) / (2 * h)
        assert beta(sched, t) == pytest.approx(fd, rel=1e-7)
    assert drift_coefficient(sched, 0.3) == 0.0


def test_reparam_time():
    assert reparam_time(NoiseSchedule.canonical_ou(), 1.7) == pytest.approx(1.7, rel=1e-15)
    vp = NoiseSchedule.vp_linear()
    assert reparam_time(vp, 0.6) == pytest.approx(0.5 * integrated_beta(vp, 0.6), rel=1e-15)
    ve = NoiseSchedule.ve_geometric()
    assert reparam_time(ve, 0.6) == pytest.approx(0.5 * ve_sigma(ve, 0.6) ** 2, rel=1e-15)


@pytest.mark.parametrize("sched", [NoiseSchedule.canonical_ou(), NoiseSchedule.vp_linear(),
                                   NoiseSchedule.ve_geometric()])
def test_bound_envelope_strictly_decreasing(sched):
    ts = np.linspace(0.05 * sched.t_max, sched.t_max, 200)
    assert np.all(np.diff(score_bound_envelope(sched, ts)) < 0)


def test_array_in_array_out_and_scalars_are_floats():
    sched = NoiseSchedule.vp_linear()
    out = integrated_beta(sched, np.array([0.1, 0.2]))
    assert isinstance(out, np.ndarray) and out.shape == (2,)
    assert isinstance(integrated_beta(sched, 0.1), float)


def test_coefficient_table():
    sched = NoiseSchedule.vp_linear()
    times = np.linspace(0.0, 1.0, 11)
    table = coefficient_table(sched, times)
    assert len(table) == 11
    assert table.alpha_bar[0] == 1.0
    assert np.all(np.diff(table.alpha_bar) < 0)
    np.testing.assert_allclose(table.alpha_bar + table.sigma ** 2, 1.0, atol=1e-15)
    with pytest.raises(DomainError):
        coefficient_table(sched, times[::-1])
    with pytest.raises(DomainError):
        coefficient_table(sched, [])
    with pytest.raises(KindMismatchError):
        coefficient_table(NoiseSchedule.ve_geometric(), times)


def test_domain_and_kind_errors():
    vp = NoiseSchedule.vp_linear()
    with pytest.raises(DomainError):
        integrated_beta(vp, -0.1)
    with pytest.raises(DomainError):
        vp_coefficients(vp, 1.5)
    with pytest.raises(DomainError):
        integrated_beta(vp, float("nan"))
    with pytest.raises(KindMismatchError):
        vp_coefficients(NoiseSchedule.ve_geometric(), 0.5)
    with pytest.raises(KindMismatchError):
        ve_sigma(vp, 0.5)
    with pytest.raises(DomainError):
        NoiseSchedule.vp_linear(beta_min=2.0, beta_max=1.0)
    with pytest.raises(DomainError):
        NoiseSchedule.ve_geometric(sigma_min=5.0, sigma_max=1.0)
    with pytest.raises(DomainError):
        NoiseSchedule.vp_constant(0.0)
    with pytest.raises(ValueError):
        NoiseSchedule("cosine")


def test_kind_enum_and_dict():
    assert ScheduleKind("vp-linear-beta").is_vp
    assert not ScheduleKind.VE_GEOMETRIC.is_vp
    assert NoiseSchedule.canonical_ou().to_dict() == {"kind": "vp-constant-beta", "t_max": 5.0,
                                                      "beta_const": 2.0}
