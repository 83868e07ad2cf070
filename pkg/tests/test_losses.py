import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shortfall import Exponential, Identity, PiecewisePolynomial, loss_from_dict
from shortfall.errors import DomainOverflow, EtaNonpositive, NotDifferentiable

LOSSES = [Identity(), Exponential(1.0), Exponential(2.0), PiecewisePolynomial(0.0, 1),
          PiecewisePolynomial(0.0, 2), PiecewisePolynomial(1.0, 3)]


def test_eval_examples():
    assert Identity()(3.2) == 3.2
    assert Exponential(1.0)(0.0) == 1.0
    assert PiecewisePolynomial(0.0, 2)(2.0) == 2.0


def test_deriv1_examples():
    assert Exponential(2.0).deriv1(0.0) == 2.0
    assert Identity().deriv1(-7.0) == 1.0
    assert PiecewisePolynomial(1.0, 2).deriv1(0.5) == 0.0


def test_deriv2_examples():
    assert Exponential(1.0).deriv2(0.0) == 1.0
    assert Identity().deriv2(5.0) == 0.0
    assert Exponential(2.0).deriv2(1.0) == pytest.approx(4 * math.e**2, rel=1e-14)
    assert Exponential(2.0).deriv2(1.0) == pytest.approx(29.556, abs=1e-3)


def test_deriv2_kink_degree_one():
    with pytest.raises(NotDifferentiable):
        PiecewisePolynomial(0.5, 1).deriv2(0.5)
    # degree 2 uses the one-sided value at the kink
    assert PiecewisePolynomial(0.5, 2).deriv2(0.5) >= 0.0


def test_exponential_overflow():
    with pytest.raises(DomainOverflow):
        Exponential(1.0)(1000.0)
    with pytest.raises(DomainOverflow):
        Exponential(1.0).deriv1(np.array([0.0, 800.0]))


def test_array_evaluation_keeps_shape():
    x = np.linspace(-2, 2, 7)
    for loss in LOSSES:
        assert loss(x).shape == x.shape
        assert loss.deriv1(x).shape == x.shape


def test_constants_on_examples():
    c = Exponential(1.0).constants_on(-1.0, 1.0)
    assert c.L1 == pytest.approx(math.e, rel=1e-14)
    assert c.eta == pytest.approx(1 / math.e, rel=1e-14)
    assert c.L2 == pytest.approx(math.e, rel=1e-14)
    c = Identity().constants_on(0.0, 1.0)
    assert (c.L1, c.eta, c.L2) == (1.0, 1.0, 0.0)
    with pytest.raises(EtaNonpositive):
        PiecewisePolynomial(0.0, 2).constants_on(-1.0, 1.0)


@pytest.mark.parametrize("loss", [Exponential(0.7), Identity(), PiecewisePolynomial(-3.0, 2),
                                  PiecewisePolynomial(-3.0, 3)])
def test_constants_bound_grid(loss):
    lo, hi = -2.0, 1.5
    c = loss.constants_on(lo, hi)
    xs = np.linspace(lo, hi, 101)
    d = loss.deriv1(xs)
    assert np.all(d >= c.eta - 1e-15) and np.all(d <= c.L1 + 1e-15)
    diff = np.abs(d[:, None] - d[None, :])
    gap = np.abs(xs[:, None] - xs[None, :])
    assert np.all(diff <= c.L2 * gap + 1e-12)


@pytest.mark.parametrize("loss", LOSSES)
def test_monotone_and_convex_on_grid(loss):
    xs = np.linspace(-5, 5, 1001)
    assert np.all(np.diff(loss(xs)) >= 0)
    assert np.all(np.diff(loss.deriv1(xs)) >= 0)
    assert np.all(loss.deriv1(xs) >= 0)


@pytest.mark.parametrize("loss,kinks", [(Exponential(1.0), ()), (Exponential(0.5), ()),
                                        (Identity(), ()), (PiecewisePolynomial(0.3, 2), (0.3,)),
                                        (PiecewisePolynomial(-1.0, 3), (-1.0,)),
                                        (PiecewisePolynomial(0.0, 1), (0.0,))])
def test_deriv1_matches_central_difference(loss, kinks):
    h = 1e-5
    for x in np.linspace(-5, 5, 201):
        if any(abs(x - k) < 1e-3 for k in kinks):
            continue
        fd = (loss(x + h) - loss(x - h)) / (2 * h)
        assert fd == pytest.approx(loss.deriv1(x), rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("loss", [Exponential(1.3), PiecewisePolynomial(0.2, 3)])
def test_deriv2_matches_central_difference(loss):
    h = 1e-5
    for x in np.linspace(-3, 3, 61):
        if abs(x - 0.2) < 1e-3:
            continue
        fd = (loss.deriv1(x + h) - loss.deriv1(x - h)) / (2 * h)
        assert fd == pytest.approx(loss.deriv2(x), rel=1e-6, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(x1=st.floats(-20, 20), x2=st.floats(-20, 20), beta=st.floats(0.05, 3.0))
def test_exponential_monotone_property(x1, x2, beta):
    loss = Exponential(beta)
    lo, hi = min(x1, x2), max(x1, x2)
    assert loss(lo) <= loss(hi)
    assert loss.deriv1(lo) <= loss.deriv1(hi)


@pytest.mark.parametrize("loss", LOSSES)
def test_dict_round_trip(loss):
    assert loss_from_dict(loss.to_dict()) == loss


def test_exponential_config_form():
    assert loss_from_dict({"kind": "exponential", "beta": 1.0}) == Exponential(1.0)
