"""Sample sources for the loss ``xi = -X`` and closed-form shortfall oracles.

All randomness flows through :class:`RngStream`, a thin wrapper around
numpy's counter-based Philox generator keyed by ``(seed, stream_id)``.
Every model maps consecutive standard normal variates to samples, so a
stream yields the same samples whether they are drawn one at a time or in
blocks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Optional, Union

import numpy as np

from .errors import ConfigError, ThetaOutOfDomain, WrongKind
from .losses import Exponential, Identity, LossSpec

_MASK64 = (1 << 64) - 1


class RngStream:
    """Reproducible stream of standard normal variates.

    Identical ``(seed, stream_id)`` pairs reproduce the same sequence bit for
    bit; distinct ``stream_id`` values use distinct Philox keys. ``counter``
    is the number of variates handed out so far.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if not (0 <= seed <= _MASK64 and 0 <= stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.counter = 0
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def normals(self, size: int) -> np.ndarray:
        out = self._gen.standard_normal(int(size))
        self.counter += int(size)
        return out

    def spawn(self, stream_id: int) -> "RngStream":
        """Fresh stream with the same seed and another id."""
        return RngStream(self.seed, stream_id)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"


@dataclass(frozen=True)
class GaussianLoss:
    """``xi ~ N(mean, std^2)``, taken directly as the loss ``-X``."""

    mean: float = 0.0
    std: float = 1.0

    variates_per_draw = 1

    def __post_init__(self):
        if not self.std >= 0:
            raise ConfigError(f"std must be non-negative, got {self.std!r}")

    def transform(self, z):
        return self.mean + self.std * z

    @property
    def xi_moments(self):
        return self.mean, self.std**2

    def xi_range(self, width: float = 6.0):
        return self.mean - width * self.std, self.mean + width * self.std

    def to_dict(self):
        return {"kind": "gaussian", "mean": self.mean, "std": self.std}


@dataclass(frozen=True)
class TruncatedGaussianLoss:
    """Gaussian draws clamped to ``mean +/- clip * std``."""

    mean: float = 0.0
    std: float = 1.0
    clip: float = 3.0

    variates_per_draw = 1

    def __post_init__(self):
        if not self.std >= 0:
            raise ConfigError(f"std must be non-negative, got {self.std!r}")
        if not self.clip > 0:
            raise ConfigError(f"clip must be positive, got {self.clip!r}")

    def transform(self, z):
        lo, hi = self.xi_range()
        return np.clip(self.mean + self.std * z, lo, hi)

    def xi_range(self, width: float = 6.0):
        return self.mean - self.clip * self.std, self.mean + self.clip * self.std

    def to_dict(self):
        return {"kind": "truncated_gaussian", "mean": self.mean, "std": self.std, "clip": self.clip}


@dataclass(frozen=True)
class TwoAssetPortfolio:
    """Position ``X(theta) = theta*Y1 + (1-theta)*Y2`` with independent normal assets.

    ``xi(theta) = -X(theta)`` and its pathwise derivative ``-(Y1 - Y2)`` are
    built from the same pair ``(Y1, Y2)``.
    """

    m1: float = 0.5
    m2: float = 0.0
    s1: float = 1.0
    s2: float = 1.0
    theta_domain: tuple[float, float] = (0.0, 1.0)

    variates_per_draw = 2

    def __post_init__(self):
        if not (self.s1 >= 0 and self.s2 >= 0):
            raise ConfigError("asset standard deviations must be non-negative")
        lo, hi = self.theta_domain
        if not lo < hi:
            raise ConfigError(f"theta_domain must satisfy lo < hi, got {self.theta_domain}")
        object.__setattr__(self, "theta_domain", (float(lo), float(hi)))

    def check_theta(self, theta):
        lo, hi = self.theta_domain
        if not lo <= theta <= hi:
            raise ThetaOutOfDomain(f"theta={theta} outside [{lo}, {hi}]")

    def xi_moments_at(self, theta):
        mean = -(theta * self.m1 + (1.0 - theta) * self.m2)
        var = theta**2 * self.s1**2 + (1.0 - theta) ** 2 * self.s2**2
        return mean, var

    def xi_range(self, width: float = 6.0):
        """Range covering ``xi(theta)`` for every theta in the domain."""
        lows, highs = [], []
        for th in np.linspace(*self.theta_domain, 11):
            mean, var = self.xi_moments_at(th)
            sd = math.sqrt(var)
            lows.append(mean - width * sd)
            highs.append(mean + width * sd)
        return min(lows), max(highs)

    def to_dict(self):
        return {
            "kind": "two_asset", "m1": self.m1, "m2": self.m2,
            "s1": self.s1, "s2": self.s2, "theta_domain": list(self.theta_domain),
        }


ModelSpec = Union[GaussianLoss, TruncatedGaussianLoss, TwoAssetPortfolio]


def model_from_dict(d: dict[str, Any]) -> ModelSpec:
    """Parse the config form, e.g. ``{"kind": "two_asset", "m1": 0.5, ...}``."""
    kind = d.get("kind")
    try:
        if kind == "gaussian":
            return GaussianLoss(float(d["mean"]), float(d["std"]))
        if kind == "truncated_gaussian":
            return TruncatedGaussianLoss(float(d["mean"]), float(d["std"]), float(d["clip"]))
        if kind == "two_asset":
            dom = d.get("theta_domain")
            if dom is None:
                raise ConfigError("two_asset model requires theta_domain")
            return TwoAssetPortfolio(
                float(d["m1"]), float(d["m2"]), float(d["s1"]), float(d["s2"]),
                (float(dom[0]), float(dom[1])),
            )
    except KeyError as exc:
        raise ConfigError(f"model spec {d!r} is missing {exc}") from None
    raise ConfigError(f"unknown model kind {kind!r}")


def draw_many(model: ModelSpec, rng: RngStream, size: int) -> np.ndarray:
    """``size`` i.i.d. losses from a non-parameterized model."""
    if isinstance(model, TwoAssetPortfolio):
        raise WrongKind("TwoAssetPortfolio needs theta; use draw_with_sensitivity")
    return model.transform(rng.normals(size))


def draw(model: ModelSpec, rng: RngStream) -> float:
    """One loss sample ``xi``; consumes one variate."""
    return float(draw_many(model, rng, 1)[0])


def pair_draws(model: TwoAssetPortfolio, theta: float, rng: RngStream, size: int):
    """``size`` coupled draws ``(xi, xi_prime)`` at ``theta``."""
    if not isinstance(model, TwoAssetPortfolio):
        raise WrongKind(f"{type(model).__name__} has no theta sensitivity")
    model.check_theta(theta)
    z = rng.normals(2 * size).reshape(size, 2)
    y1 = model.m1 + model.s1 * z[:, 0]
    y2 = model.m2 + model.s2 * z[:, 1]
    xi = -(theta * y1 + (1.0 - theta) * y2)
    return xi, -(y1 - y2)


def draw_with_sensitivity(model: ModelSpec, theta: float, rng: RngStream) -> tuple[float, float]:
    """One coupled draw ``(xi(theta), xi'(theta))``."""
    xi, xp = pair_draws(model, theta, rng, 1)
    return float(xi[0]), float(xp[0])


def _gaussian_xi(model, theta):
    if isinstance(model, GaussianLoss):
        return model.xi_moments
    if isinstance(model, TwoAssetPortfolio):
        if theta is None:
            raise WrongKind("TwoAssetPortfolio oracle needs theta")
        return model.xi_moments_at(theta)
    return None


def closed_form_sr(model: ModelSpec, loss: LossSpec, lam: float,
                   theta: Optional[float] = None) -> Optional[float]:
    """Analytic shortfall ``t*`` solving ``E[l(xi - t)] = lam``, or ``None``.

    Available for Gaussian ``xi`` under the exponential loss (entropic risk)
    and under the identity loss.
    """
    moments = _gaussian_xi(model, theta)
    if moments is None:
        return None
    mean, var = moments
    if isinstance(loss, Exponential):
        if lam <= 0:
            return None
        b = loss.beta
        return mean + b * var / 2.0 - math.log(lam) / b
    if isinstance(loss, Identity):
        return mean - lam
    return None


def closed_form_sr_derivative(model: ModelSpec, loss: LossSpec, lam: float,
                              theta: float) -> Optional[float]:
    """``d t*(theta) / d theta`` for the two-asset portfolio, or ``None``."""
    if not isinstance(model, TwoAssetPortfolio):
        return None
    drift = -(model.m1 - model.m2)
    if isinstance(loss, Exponential):
        return drift + loss.beta * (theta * model.s1**2 - (1.0 - theta) * model.s2**2)
    if isinstance(loss, Identity):
        return drift
    return None


def portfolio_mu2(model: TwoAssetPortfolio, loss: LossSpec) -> Optional[float]:
    """Curvature of ``theta -> t*(theta)``; constant for the Gaussian portfolio."""
    if isinstance(model, TwoAssetPortfolio) and isinstance(loss, Exponential):
        return loss.beta * (model.s1**2 + model.s2**2)
    return None


def portfolio_argmin(model: TwoAssetPortfolio, loss: LossSpec) -> Optional[float]:
    """Minimizer of the closed-form shortfall over the theta domain."""
    mu2 = portfolio_mu2(model, loss)
    if not mu2:
        return None
    b = loss.beta
    interior = (b * model.s2**2 + (model.m1 - model.m2)) / (b * (model.s1**2 + model.s2**2))
    lo, hi = model.theta_domain
    return min(max(interior, lo), hi)
