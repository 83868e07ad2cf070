import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shortfall import (EstimatorConfig, EstimatorState, Exponential, GaussianLoss, Identity,
                       PiecewisePolynomial, RngStream, StepSchedule, TruncatedGaussianLoss,
                       bracket_search, closed_form_sr, draw_many, estimate, g_hat, project,
                       run_sa, sa_step, saa_binary_search, step_size)
from shortfall import bounds as bd
from shortfall.errors import BracketNotFound, ConfigError, NoSignChange
from shortfall.estimator import empirical_g, geometric_checkpoints


def cfg(loss=Identity(), lam=0.0, bracket=(-10.0, 10.0), c=1.0, alpha=1.0, t0=None):
    return EstimatorConfig(loss, lam, bracket, StepSchedule(c, alpha), t0=t0)


def test_g_hat_examples():
    assert g_hat(Identity(), 0.3, 0.0, 0.0) == pytest.approx(-0.3)
    assert g_hat(Exponential(1.0), 1.0, 0.7, 0.7) == 0.0
    assert g_hat(Exponential(1.0), 1.0, 1.0, 0.0) == pytest.approx(math.e - 1)


def test_project_examples():
    assert project(3, (-1, 2)) == 2
    assert project(-5, (-1, 2)) == -1
    assert project(0.5, (-1, 2)) == 0.5


@settings(max_examples=300, deadline=None)
@given(a=st.floats(-1e6, 1e6), b=st.floats(-1e6, 1e6))
def test_project_idempotent_nonexpansive(a, b):
    br = (-1.0, 2.0)
    pa, pb = project(a, br), project(b, br)
    assert project(pa, br) == pa
    assert abs(pa - pb) <= abs(a - b)


def test_step_size_examples():
    assert step_size(StepSchedule(2, 1), 4) == 0.5
    assert step_size(StepSchedule(1, 0.5), 4) == 0.5
    assert step_size(StepSchedule(0.75, 1), 1) == 0.75


def test_schedule_validation():
    with pytest.raises(ValueError):
        StepSchedule(1.0, 1.5)
    with pytest.raises(ValueError):
        StepSchedule(0.0, 1.0)


def test_sa_step_examples():
    s = sa_step(EstimatorState(0.0, 0), cfg(), 2.0)
    assert (s.t, s.k) == (2.0, 1)
    s = sa_step(EstimatorState(0.0, 0), cfg(bracket=(-1.0, 1.0)), 2.0)
    assert s.t == 1.0
    s = sa_step(EstimatorState(0.4, 3), cfg(lam=0.1), 0.5)  # g_hat = 0
    assert s.t == pytest.approx(0.4, abs=1e-15) and s.k == 4


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(bracket=(1.0, 1.0))
    with pytest.raises(ValueError):
        cfg(t0=20.0)
    with pytest.raises(ConfigError):
        EstimatorConfig(Exponential(1.0), -1.0, (-1, 1), StepSchedule(1.0))
    assert cfg(bracket=(-2.0, 4.0)).t0 == 1.0


def python_recursion(xi, loss, lam, bracket, c, alpha, t0):
    t = t0
    for k, x in enumerate(xi, start=1):
        t = min(max(t + c / k**alpha * (loss(x - t) - lam), bracket[0]), bracket[1])
    return t


@pytest.mark.parametrize("loss,lam,alpha", [(Exponential(1.0), 1.0, 1.0), (Identity(), -0.5, 0.7),
                                            (PiecewisePolynomial(-1.0, 2), 0.3, 1.0)])
def test_run_sa_matches_python_recursion(loss, lam, alpha):
    xi = draw_many(GaussianLoss(0, 1), RngStream(1, 0), 2000)
    c = cfg(loss, lam, (-2.0, 3.0), c=1.5, alpha=alpha)
    assert run_sa(xi, c).t == pytest.approx(python_recursion(xi, loss, lam, (-2, 3), 1.5, alpha, 0.5),
                                            abs=1e-12)


def test_estimate_single_step():
    c = cfg(Exponential(1.0), 1.0, (-2.0, 3.0))
    tr = estimate(GaussianLoss(0, 1), c, 1, RngStream(3, 0))
    xi = draw_many(GaussianLoss(0, 1), RngStream(3, 0), 1)[0]
    assert len(tr) >= 1
    assert tr.final == sa_step(EstimatorState(c.t0), c, xi).t


def test_estimate_degenerate_brute_force():
    model = TruncatedGaussianLoss(1.0, 1e-12, 1.0)
    c = cfg(Identity(), 0.0, (-5.0, 5.0), c=1.0, t0=0.0)
    tr = estimate(model, c, 1000, RngStream(0, 0), record_every=1)
    t, expect = 0.0, []
    for k in range(1, 1001):
        t = t + (1 / k) * (1 - t)
        expect.append(t)
    np.testing.assert_allclose(tr.t, expect, atol=1e-9)
    assert np.all(np.diff(tr.t) >= -1e-12)
    assert abs(tr.final - 1.0) <= 1e-2


def test_estimate_consumes_exactly_n_and_matches_replay():
    model, c = GaussianLoss(0, 1), cfg(Exponential(1.0), 1.0, (-2.0, 3.0), c=9.0)
    rng = RngStream(8, 2)
    tr = estimate(model, c, 70_000, rng, record_every=10_000)
    assert rng.counter == 70_000
    assert list(tr.k) == list(range(10_000, 70_001, 10_000))
    xi = draw_many(model, RngStream(8, 2), 70_000)
    assert tr.final == run_sa(xi, c).t


def test_iterates_confined_when_root_outside_bracket(caplog):
    c = cfg(Exponential(1.0), 1.0, (1.0, 3.0), c=5.0)
    with caplog.at_level(logging.WARNING):
        tr = estimate(GaussianLoss(0, 1), c, 2000, RngStream(4, 0), record_every=1)
    assert np.all((tr.t >= 1.0) & (tr.t <= 3.0))
    assert tr.final == 1.0
    assert "bracket edge" in caplog.text


def test_geometric_checkpoints():
    pts = geometric_checkpoints(10**5)
    assert pts[0] == 1 and pts[-1] == 10**5
    assert len(pts) < 60


def test_saa_examples():
    assert saa_binary_search([1, 1, 1], Identity(), 0.0, (-5, 5), tol=1e-8) == pytest.approx(1.0, abs=1e-8)
    assert saa_binary_search([0, 2], Identity(), 0.0, (-5, 5), tol=1e-8) == pytest.approx(1.0, abs=1e-8)
    t = saa_binary_search(np.zeros(10), Exponential(1.0), 1.0, (-5, 5))
    assert t == pytest.approx(0.0, abs=1e-9)


def test_saa_no_sign_change():
    with pytest.raises(NoSignChange):
        saa_binary_search([1, 1], Identity(), 0.0, (2, 5))


@settings(max_examples=50, deadline=None)
@given(t1=st.floats(-3, 3), t2=st.floats(-3, 3))
def test_empirical_g_monotone(t1, t2):
    xi = draw_many(GaussianLoss(0, 1), RngStream(0, 0), 500)
    lo, hi = min(t1, t2), max(t1, t2)
    assert empirical_g(xi, Exponential(1.0), 1.0, lo) >= empirical_g(xi, Exponential(1.0), 1.0, hi)


def test_bracket_search_examples():
    tl, tu = bracket_search(GaussianLoss(0, 1), Exponential(1.0), 1.0, 10_000, RngStream(1, 0))
    assert tl < 0.5 < tu
    tl, tu = bracket_search(GaussianLoss(1.0, 0.0), Identity(), 0.0, 64, RngStream(1, 0))
    assert tl < 1.0 < tu
    tl, tu = bracket_search(GaussianLoss(0.0, 0.0), Identity(), 0.0, 64, RngStream(1, 0))
    assert tl < 0.0 < tu


def test_bracket_search_limits():
    with pytest.raises(ValueError):
        bracket_search(GaussianLoss(0, 1), Identity(), 0.0, 10, RngStream(1, 0))
    with pytest.raises(BracketNotFound):
        bracket_search(GaussianLoss(0, 1), Exponential(1.0), 1e6, 100, RngStream(1, 0), max_doublings=2)


def test_sa_and_saa_agree_on_shared_sample():
    model, loss = GaussianLoss(0, 1), Exponential(1.0)
    bracket = (-2.0, 3.0)
    consts = bd.measure_constants(model, loss, 1.0, bracket)
    c = 0.75 / consts["mu1"]
    xi = draw_many(model, RngStream(21, 0), 10**5)
    sa = run_sa(xi, cfg(loss, 1.0, bracket, c=c)).t
    saa = saa_binary_search(xi, loss, 1.0, bracket)
    p = bd.BoundParams(mu1=consts["mu1"], c=c, sigma2=consts["sigma2"], init_err2=0.0)
    assert abs(sa - saa) <= 5 * math.sqrt(bd.thm1_mse(p, 10**5))
    assert abs(saa - closed_form_sr(model, loss, 1.0)) < 0.02
