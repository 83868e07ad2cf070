"""Convex, non-decreasing loss functions and their interval constants.

Three families are built in:

* :class:`Identity` -- ``l(x) = x``; linear, used mainly for analytic checks.
* :class:`Exponential` -- ``l(x) = exp(beta * x)``; with Gaussian losses this
  gives the entropic risk and a closed-form shortfall.
* :class:`PiecewisePolynomial` -- ``l(x) = max(x - threshold, 0)**degree / degree``.

Every loss is an immutable value object. Evaluation accepts scalars or numpy
arrays and returns the same shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import ConfigError, DomainOverflow, EtaNonpositive, NotDifferentiable

# integer codes shared with the compiled kernels
IDENTITY, EXPONENTIAL, PIECEWISE = 0, 1, 2


@dataclass(frozen=True)
class LossConstants:
    """Bounds on ``l'`` and ``l''`` over ``interval``.

    ``L1`` bounds ``|l'|``, ``eta`` is the infimum of ``l'`` and ``L2`` the
    Lipschitz constant of ``l'``.
    """

    L1: float
    L2: float
    eta: float
    interval: tuple[float, float]


def _as_float(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    return float(arr) if scalar else arr


class LossSpec:
    """Common interface of the built-in losses."""

    code: int = -1
    description: str = ""

    def __call__(self, x):
        raise NotImplementedError

    def deriv1(self, x):
        raise NotImplementedError

    def deriv2(self, x):
        raise NotImplementedError

    def kernel_args(self) -> tuple[int, float, float]:
        """``(code, a, b)`` triple understood by :mod:`shortfall._kernels`."""
        raise NotImplementedError

    def check_level(self, lam: float) -> None:
        """Raise ``ConfigError`` unless ``lam`` is inside the range of the loss."""
        if not math.isfinite(lam) or lam <= 0.0:
            raise ConfigError(
                f"lambda={lam!r} must lie in the interior (0, inf) of the loss range"
            )

    def constants_on(self, lo: float, hi: float) -> LossConstants:
        """Derivative bounds on ``[lo, hi]``.

        Both derivatives of the built-in losses are non-decreasing, so the
        extrema sit at the endpoints.
        """
        if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
            raise ValueError(f"need finite lo < hi, got [{lo}, {hi}]")
        eta = self.deriv1(lo)
        if eta <= 0.0:
            raise EtaNonpositive(
                f"inf of l' on [{lo}, {hi}] is {eta}; no positive lower bound"
            )
        return LossConstants(
            L1=self.deriv1(hi), L2=self._l2_on(lo, hi), eta=eta, interval=(lo, hi)
        )

    def _l2_on(self, lo, hi):
        return self.deriv2(hi)

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class Identity(LossSpec):
    description: str = "identity loss l(x) = x"
    code = IDENTITY

    def __call__(self, x):
        arr, scalar = _as_float(x)
        return _out(arr.copy(), scalar)

    def deriv1(self, x):
        arr, scalar = _as_float(x)
        return _out(np.ones_like(arr), scalar)

    def deriv2(self, x):
        arr, scalar = _as_float(x)
        return _out(np.zeros_like(arr), scalar)

    def kernel_args(self):
        return (IDENTITY, 0.0, 0.0)

    def check_level(self, lam):
        # range of the identity is the whole real line
        if not math.isfinite(lam):
            raise ConfigError(f"lambda={lam!r} must be finite")

    def to_dict(self):
        return {"kind": "identity"}


@dataclass(frozen=True)
class Exponential(LossSpec):
    beta: float = 1.0
    description: str = "exponential loss l(x) = exp(beta x)"
    code = EXPONENTIAL

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta!r}")

    def _exp(self, x):
        arr, scalar = _as_float(x)
        with np.errstate(over="raise"):
            try:
                val = np.exp(self.beta * arr)
            except FloatingPointError as exc:
                raise DomainOverflow(
                    f"exp(beta*x) overflows for beta={self.beta}"
                ) from exc
        return val, scalar

    def __call__(self, x):
        return _out(*self._exp(x))

    def deriv1(self, x):
        val, scalar = self._exp(x)
        return _out(self.beta * val, scalar)

    def deriv2(self, x):
        val, scalar = self._exp(x)
        return _out(self.beta**2 * val, scalar)

    def kernel_args(self):
        return (EXPONENTIAL, float(self.beta), 0.0)

    def to_dict(self):
        return {"kind": "exponential", "beta": self.beta}


@dataclass(frozen=True)
class PiecewisePolynomial(LossSpec):
    threshold: float = 0.0
    degree: int = 2
    description: str = "piecewise polynomial loss max(x - s, 0)^d / d"
    code = PIECEWISE

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ConfigError(f"degree must be an integer >= 1, got {self.degree!r}")

    def __call__(self, x):
        arr, scalar = _as_float(x)
        y = np.maximum(arr - self.threshold, 0.0)
        return _out(y**self.degree / self.degree, scalar)

    def deriv1(self, x):
        # right derivative at the kink when degree == 1
        arr, scalar = _as_float(x)
        y = arr - self.threshold
        d = self.degree
        val = np.where(y >= 0.0, np.maximum(y, 0.0) ** (d - 1), 0.0)
        return _out(val, scalar)

    def deriv2(self, x):
        arr, scalar = _as_float(x)
        y = arr - self.threshold
        d = self.degree
        if d == 1:
            if np.any(y == 0.0):
                raise NotDifferentiable(
                    f"degree-1 piecewise loss has a kink at {self.threshold}"
                )
            return _out(np.zeros_like(arr), scalar)
        # one-sided (right) value at the threshold
        val = np.where(y >= 0.0, (d - 1) * np.maximum(y, 0.0) ** (d - 2), 0.0)
        return _out(val, scalar)

    def _l2_on(self, lo, hi):
        if self.degree == 1:
            # l' jumps at the threshold: not Lipschitz there
            return math.inf if lo <= self.threshold <= hi else 0.0
        return self.deriv2(hi)

    def kernel_args(self):
        return (PIECEWISE, float(self.threshold), float(self.degree))

    def to_dict(self):
        return {"kind": "piecewise", "threshold": self.threshold, "degree": self.degree}


def loss_from_dict(d: dict[str, Any]) -> LossSpec:
    """Build a loss from its config-file form, e.g. ``{"kind": "exponential", "beta": 1.0}``."""
    kind = d.get("kind")
    try:
        if kind == "identity":
            return Identity()
        if kind == "exponential":
            return Exponential(beta=float(d["beta"]))
        if kind in ("piecewise", "piecewise_polynomial"):
            return PiecewisePolynomial(
                threshold=float(d.get("threshold", 0.0)), degree=int(d.get("degree", 2))
            )
    except KeyError as exc:
        raise ConfigError(f"loss spec {d!r} is missing {exc}") from None
    raise ConfigError(f"unknown loss kind {kind!r}")
