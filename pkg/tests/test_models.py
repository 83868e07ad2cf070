import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, stats

from shortfall import (Exponential, GaussianLoss, Identity, RngStream, TruncatedGaussianLoss,
                       TwoAssetPortfolio, closed_form_sr, closed_form_sr_derivative, draw,
                       draw_many, draw_with_sensitivity, model_from_dict, pair_draws,
                       portfolio_argmin, portfolio_mu2)
from shortfall.errors import ThetaOutOfDomain, WrongKind

PORT = TwoAssetPortfolio(0.5, 0.0, 1.0, 1.0, (0.0, 1.0))


def quadrature_sr(mean, std, beta, lam):
    """Root of E[exp(beta (xi - t))] = lam with the expectation by quadrature."""
    def g(t):
        f = lambda z: math.exp(beta * (mean + std * z - t)) * stats.norm.pdf(z)  # noqa: E731
        return integrate.quad(f, -12, 12, epsabs=1e-13, epsrel=1e-12)[0] - lam
    return optimize.brentq(g, mean - 20, mean + 20, xtol=1e-13)


def test_degenerate_draw():
    rng = RngStream(1, 0)
    assert draw(TruncatedGaussianLoss(5.0, 1e-12, 1.0), rng) == pytest.approx(5.0, abs=1e-9)


def test_gaussian_sample_mean():
    xs = draw_many(GaussianLoss(0.0, 1.0), RngStream(42, 0), 10**6)
    assert abs(xs.mean()) <= 4 / math.sqrt(10**6)


def test_truncated_within_clip():
    xs = draw_many(TruncatedGaussianLoss(0.0, 1.0, 2.0), RngStream(3, 0), 10**5)
    assert xs.min() >= -2.0 and xs.max() <= 2.0


def test_draw_rejects_portfolio():
    with pytest.raises(WrongKind):
        draw(PORT, RngStream(0, 0))


def test_sensitivity_degenerate_assets():
    model = TwoAssetPortfolio(1.0, 1.0, 1e-12, 1e-12, (0.0, 1.0))
    xi, xp = draw_with_sensitivity(model, 0.3, RngStream(0, 0))
    assert xi == pytest.approx(-1.0, abs=1e-9)
    assert xp == pytest.approx(0.0, abs=1e-9)


def test_theta_out_of_domain():
    with pytest.raises(ThetaOutOfDomain):
        draw_with_sensitivity(PORT, -0.1, RngStream(0, 0))


def test_portfolio_mean():
    xi, _ = pair_draws(PORT, 0.5, RngStream(7, 0), 10**6)
    assert xi.mean() == pytest.approx(-0.25, abs=0.004)


def test_pathwise_sensitivity_exact_on_common_pairs():
    d = 1e-3
    rng_a, rng_b, rng_c = RngStream(5, 1), RngStream(5, 1), RngStream(5, 1)
    up, _ = pair_draws(PORT, 0.5 + d, rng_a, 1000)
    dn, _ = pair_draws(PORT, 0.5 - d, rng_b, 1000)
    _, xp = pair_draws(PORT, 0.5, rng_c, 1000)
    np.testing.assert_allclose((up - dn) / (2 * d), xp, rtol=0, atol=1e-10)


def test_closed_form_examples():
    assert closed_form_sr(GaussianLoss(0, 1), Exponential(1.0), 1.0) == pytest.approx(0.5, abs=1e-15)
    assert quadrature_sr(0.0, 1.0, 1.0, 1.0) == pytest.approx(0.5, abs=1e-9)
    assert closed_form_sr(GaussianLoss(2, 3), Identity(), 0.0) == 2.0
    t = closed_form_sr(PORT, Exponential(1.0), 1.0, theta=0.5)
    assert t == pytest.approx(0.0, abs=1e-15)
    assert quadrature_sr(-0.25, math.sqrt(0.5), 1.0, 1.0) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("mean,std,beta,lam", [(0.3, 0.7, 0.5, 2.0), (-1.0, 1.5, 1.2, 0.4),
                                               (2.0, 0.2, 2.0, 1.0)])
def test_closed_form_matches_quadrature(mean, std, beta, lam):
    t = closed_form_sr(GaussianLoss(mean, std), Exponential(beta), lam)
    assert t == pytest.approx(quadrature_sr(mean, std, beta, lam), abs=1e-8)


def test_no_oracle_returns_none():
    from shortfall import PiecewisePolynomial
    assert closed_form_sr(TruncatedGaussianLoss(0, 1, 2), Exponential(1.0), 1.0) is None
    assert closed_form_sr(GaussianLoss(0, 1), PiecewisePolynomial(0, 2), 1.0) is None
    assert closed_form_sr_derivative(GaussianLoss(0, 1), Exponential(1.0), 1.0, 0.5) is None


def test_derivative_examples():
    assert closed_form_sr_derivative(PORT, Exponential(1.0), 1.0, 0.5) == pytest.approx(-0.5)
    sym = TwoAssetPortfolio(0.0, 0.0, 1.0, 1.0, (0.0, 1.0))
    assert closed_form_sr_derivative(sym, Exponential(1.0), 1.0, 0.5) == 0.0
    assert closed_form_sr_derivative(PORT, Exponential(1.0), 1.0, 0.75) == pytest.approx(0.0, abs=1e-15)
    d = 1e-6
    fd = (closed_form_sr(PORT, Exponential(1.0), 1.0, 0.5 + d)
          - closed_form_sr(PORT, Exponential(1.0), 1.0, 0.5 - d)) / (2 * d)
    assert fd == pytest.approx(-0.5, rel=1e-6)


def test_portfolio_curvature_and_argmin():
    assert portfolio_mu2(PORT, Exponential(1.0)) == 2.0
    assert portfolio_argmin(PORT, Exponential(1.0)) == pytest.approx(0.75)
    # SR(theta) - SR(theta*) is exactly (mu2/2)(theta - theta*)^2
    for th in np.linspace(0, 1, 11):
        gap = closed_form_sr(PORT, Exponential(1.0), 1.0, th) - closed_form_sr(PORT, Exponential(1.0), 1.0, 0.75)
        assert gap == pytest.approx((th - 0.75) ** 2, abs=1e-14)


@settings(max_examples=100, deadline=None)
@given(m=st.floats(-3, 3), s=st.floats(0.05, 2), a=st.floats(-5, 5),
       beta=st.floats(0.1, 2), lam=st.floats(0.1, 5))
def test_cash_invariance(m, s, a, beta, lam):
    t0 = closed_form_sr(GaussianLoss(m, s), Exponential(beta), lam)
    t1 = closed_form_sr(GaussianLoss(m + a, s), Exponential(beta), lam)
    assert t1 == pytest.approx(t0 + a, abs=1e-12)


def test_oracle_root_by_monte_carlo():
    model, loss = GaussianLoss(0.2, 0.8), Exponential(1.0)
    t = closed_form_sr(model, loss, 1.5)
    vals = loss(draw_many(model, RngStream(11, 0), 10**6) - t)
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean() - 1.5) <= 3 * se


def test_stream_determinism_and_counter():
    a, b = RngStream(9, 4), RngStream(9, 4)
    xa = draw_many(GaussianLoss(0, 1), a, 1000)
    xb = np.concatenate([draw_many(GaussianLoss(0, 1), b, 1) for _ in range(1000)])
    assert np.array_equal(xa, xb)
    assert a.counter == b.counter == 1000
    pair_draws(PORT, 0.5, a, 10)
    assert a.counter == 1020
    other = draw_many(GaussianLoss(0, 1), RngStream(9, 5), 1000)
    assert not np.array_equal(xa, other)


@pytest.mark.parametrize("model", [GaussianLoss(1.0, 2.0), TruncatedGaussianLoss(0.0, 1.0, 3.0), PORT])
def test_model_round_trip(model):
    assert model_from_dict(model.to_dict()) == model
