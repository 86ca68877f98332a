import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import beta as beta_dist

from guidance_lab import guidance as G
from guidance_lab.errors import DomainError


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(0.01, 3.0))
def test_c2fg_endpoints_exact(omega0, lam):
    spec = G.C2FG(omega0, lam, 1.0)
    assert spec(1.0) == omega0
    # numpy's and libm's exp may differ in the last bit
    assert spec(0.0) == pytest.approx(omega0 * math.exp(lam), rel=4 * np.finfo(float).eps, abs=0)


@pytest.mark.parametrize("omega0,lam", [(1.0, math.log(2)), (1.0, 1.0), (1.8, 0.03), (1.7, 0.15)])
def test_c2fg_table_pairs_monotone(omega0, lam):
    values = G.omega(G.C2FG(omega0, lam, 1.0), np.linspace(0, 1, 1000))
    assert np.all(np.isfinite(values))
    assert np.all(np.diff(values) < 0)


def test_c2fg_ln2_doubles():
    spec = G.C2FG(1.0, math.log(2.0), 1.0)
    assert spec(0.0) == pytest.approx(2.0, rel=1e-15)
    assert spec(1.0) == 1.0


def test_interval_is_closed():
    spec = G.Interval(omega=1.8, t_low=0.2, t_high=0.7)
    assert spec(0.2) == 1.8 and spec(0.7) == 1.8 and spec(0.5) == 1.8
    assert spec(0.9) == 1.0 and spec(0.1) == 1.0
    with pytest.raises(DomainError):
        G.Interval(t_low=0.8, t_high=0.2)


def test_shape_schedules():
    assert G.Linear(2.0)(1.0) == 2.0 and G.Linear(2.0)(0.0) == 0.0
    assert G.ReverseLinear(2.0)(0.0) == 2.0 and G.ReverseLinear(2.0)(1.0) == 0.0
    sine = G.omega(G.Sine(1.5), np.linspace(0, 1, 101))
    assert np.all(sine >= 0) and sine[50] == pytest.approx(1.5)


def test_beta_pdf_forms():
    u = np.linspace(0, 1, 21)
    paper_form = G.BetaPDF(omega_peak=1.5, a=2, b=2, baseline=0.0)
    np.testing.assert_allclose(G.omega(paper_form, 1 - u), beta_dist.pdf(u, 2, 2), atol=1e-14)
    raised = G.BetaPDF(omega_peak=1.8, a=2, b=2)
    assert raised(0.0) == pytest.approx(1.0) and raised(1.0) == pytest.approx(1.0)
    assert raised(0.5) == pytest.approx(1.8)
    with pytest.raises(DomainError):
        G.BetaPDF(a=0.5)


def test_ratio_adaptive():
    spec = G.RatioAdaptive(omega_max=18.0, alpha=12.0)
    assert spec(0.5, ratio=0.0) == 18.0
    assert spec(0.5, ratio=10.0) == pytest.approx(1.0, abs=1e-40)
    np.testing.assert_allclose(spec(0.5, ratio=np.array([0.0, 0.1])), [18.0, 1 + 17 * math.exp(-1.2)])
    with pytest.raises(DomainError):
        spec(0.5)


def test_domain_errors():
    with pytest.raises(DomainError):
        G.C2FG(1.0, 0.5, 1.0)(1.5)
    with pytest.raises(DomainError):
        G.Fixed(2.0)(-0.1)
    with pytest.raises(DomainError):
        G.C2FG(0.0, 0.5)


vec = arrays(np.float64, (4, 3), elements=st.floats(-1e3, 1e3))


@settings(max_examples=100, deadline=None)
@given(vec, vec, st.floats(0.0, 20.0))
def test_combine_affine(cond, uncond, w):
    out = G.combine(cond, uncond, w)
    scale = 1e-12 * (1 + np.abs(cond).max() + np.abs(uncond).max()) * (1 + w)
    np.testing.assert_allclose(out - uncond, w * (cond - uncond), atol=scale)


@settings(max_examples=50, deadline=None)
@given(vec, vec)
def test_combine_endpoints_exact(cond, uncond):
    np.testing.assert_array_equal(G.combine(cond, uncond, 1.0), cond)
    np.testing.assert_array_equal(G.combine(cond, uncond, 0.0), uncond)


def test_combine_per_point_weights():
    cond = np.ones((3, 2))
    uncond = np.zeros((3, 2))
    np.testing.assert_array_equal(G.combine(cond, uncond, np.array([0.0, 1.0, 2.0])),
                                  [[0, 0], [1, 1], [2, 2]])
    with pytest.raises(DomainError):
        G.combine(cond, np.zeros((2, 2)), 1.0)


def test_eps_score_round_trip():
    s = np.array([[0.5, -2.0]])
    np.testing.assert_allclose(G.score_from_eps(G.eps_from_score(s, 0.3), 0.3), s, rtol=1e-15)
    assert G.guidance_ratio(np.array([1.0, 0.0]), np.array([0.0, 0.0]), 1e-8) == pytest.approx(1e8)


@pytest.mark.parametrize("spec", [
    G.Fixed(1.5), G.C2FG(1.7, 0.15), G.Interval(), G.Linear(2.0), G.ReverseLinear(1.2), G.Sine(1.1),
    G.BetaPDF(), G.BetaPDF(baseline=0.0), G.RatioAdaptive(),
])
def test_dict_round_trip(spec):
    assert G.guidance_from_dict(spec.to_dict()) == spec
    assert spec.kind in G.guidance_label(spec)


def test_dict_errors():
    with pytest.raises(DomainError):
        G.guidance_from_dict({"kind": "cosine"})
    with pytest.raises(DomainError):
        G.guidance_from_dict({"kind": "fixed", "weight": 2.0})
    assert G.guidance_from_dict({"kind": "c2fg", "omega0": 1, "lambda": 0.5}).lam == 0.5
