"""Batched ratio estimator of the shortfall derivative ``d t*(theta) / d theta``.

The derivative equals ``A / B`` with ``A = E[l'(xi - t*) xi']`` and
``B = E[l'(xi - t*)]``. The estimator replaces ``t*`` by an SA estimate
``t_m`` from ``m`` iterations and both expectations by means over ``m``
further coupled draws, so it is biased but consistent.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import BmBelowEta, DomainOverflow, EtaNonpositive, WrongKind
from .estimator import EstimatorConfig
from .losses import LossSpec
from .models import ModelSpec, RngStream, TwoAssetPortfolio


@dataclass(frozen=True)
class GradientEstimate:
    value: float
    a_m: float
    b_m: float
    t_m: float
    m: int
    theta: float


def eta_guard(model: ModelSpec, loss: LossSpec, bracket, width: float = 6.0) -> float:
    """Half the lower bound of ``l'`` over the reachable arguments ``xi - t``.

    Returns 0 when ``l'`` has no positive lower bound there, so the guard
    then only trips on a vanishing denominator.
    """
    xlo, xhi = model.xi_range(width)
    tl, tu = bracket
    try:
        eta = loss.constants_on(xlo - tu, xhi - tl).eta
    except EtaNonpositive:
        return 0.0
    return 0.5 * eta


def model_args(model: TwoAssetPortfolio):
    return float(model.m1), float(model.m2), float(model.s1), float(model.s2)


def estimate_gradient(model: ModelSpec, theta: float, m: int, est_config: EstimatorConfig,
                      rng: RngStream, eta: Optional[float] = None) -> GradientEstimate:
    """One derivative estimate at ``theta`` from ``2m`` coupled draws.

    ``eta`` is the guard on ``B_m``; by default half the interval lower bound
    of ``l'`` (see :func:`eta_guard`).
    """
    if not isinstance(model, TwoAssetPortfolio):
        raise WrongKind(f"{type(model).__name__} has no theta sensitivity")
    model.check_theta(theta)
    if m < 1:
        raise ValueError("batch size m must be >= 1")
    guard = eta_guard(model, est_config.loss, est_config.bracket) if eta is None else eta

    z = rng.normals(4 * m)
    lam, tl, tu, c, alpha, code, a, b = est_config.kernel_args()
    a_m, b_m, t_m, status = _kernels.gradient_from_normals(
        z, float(theta), *model_args(model), float(est_config.t0),
        lam, tl, tu, c, alpha, code, a, b)
    if status != _kernels.OK:
        raise DomainOverflow(f"loss overflow while estimating the derivative at theta={theta}")
    if not b_m > guard:
        raise BmBelowEta(f"B_m={b_m:.4g} <= guard {guard:.4g} at theta={theta}", b_m=b_m)
    return GradientEstimate(value=a_m / b_m, a_m=a_m, b_m=b_m, t_m=t_m, m=m, theta=float(theta))


def population_terms(model: TwoAssetPortfolio, loss: LossSpec, lam: float, theta: float,
                     rng: RngStream, size: int = 200_000):
    """Monte-Carlo ``A(theta)``, ``B(theta)`` and the second moments used by the error constants.

    Requires a closed-form ``t*``. Returns a dict with ``A``, ``B``,
    ``beta1 = E[(l' xi')^2]`` and ``beta2 = E[l'^2]``.
    """
    from .models import closed_form_sr, pair_draws

    t_star = closed_form_sr(model, loss, lam, theta)
    if t_star is None:
        raise WrongKind("no closed-form shortfall for this model/loss")
    xi, xp = pair_draws(model, theta, rng, size)
    d = loss.deriv1(xi - t_star)
    return {
        "A": float(np.mean(d * xp)),
        "B": float(np.mean(d)),
        "beta1": float(np.mean((d * xp) ** 2)),
        "beta2": float(np.mean(d**2)),
        "t_star": t_star,
    }
