"""Stochastic gradient descent on the shortfall of a parameterized position.

``theta_k = clamp(theta_{k-1} - (c/k) * h'_m(theta_{k-1}))`` where ``h'_m`` is
the batched ratio estimate from :mod:`shortfall.gradient`. The batch size
stays constant over the horizon: either a fixed ``m`` or ``ceil(n**rho)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import _kernels
from .errors import BmBelowEta, ConfigError, DomainOverflow, WrongKind
from .estimator import EstimatorConfig, StepSchedule, geometric_checkpoints
from .gradient import GradientEstimate, eta_guard, model_args
from .models import ModelSpec, RngStream, TwoAssetPortfolio

_CHUNK_VARIATES = 1 << 20


@dataclass(frozen=True)
class Fixed:
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("fixed batch size must be >= 1")


@dataclass(frozen=True)
class Horizon:
    rho: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError(f"rho must lie in (0, 1], got {self.rho!r}")


BatchSpec = Union[Fixed, Horizon]


def batch_size(batch: BatchSpec, n: int) -> int:
    if n < 1:
        raise ValueError("horizon must be >= 1")
    if isinstance(batch, Fixed):
        return batch.m
    # guard against n**rho landing a hair above an integer
    return max(1, math.ceil(round(n**batch.rho, 9)))


@dataclass(frozen=True)
class OptimizerConfig:
    theta_domain: tuple[float, float]
    schedule: StepSchedule
    batch: BatchSpec
    n: int
    est_config: EstimatorConfig
    theta0: Optional[float] = None
    clamp: bool = True
    mu2: Optional[float] = None  # recorded only

    def __post_init__(self):
        lo, hi = self.theta_domain
        if not lo < hi:
            raise ConfigError(f"theta_domain needs lo < hi, got {self.theta_domain}")
        object.__setattr__(self, "theta_domain", (float(lo), float(hi)))
        if self.schedule.alpha != 1.0:
            raise ConfigError("the optimizer uses a_k = c/k (alpha = 1)")
        if self.n < 1:
            raise ConfigError("horizon n must be >= 1")
        if self.theta0 is None:
            object.__setattr__(self, "theta0", 0.5 * (lo + hi))
        elif not lo <= self.theta0 <= hi:
            raise ConfigError(f"theta0={self.theta0} outside {self.theta_domain}")

    @property
    def m(self) -> int:
        return batch_size(self.batch, self.n)


@dataclass
class OptRunRecord:
    """Recorded iterates ``(k, theta_k, h'_m(theta_{k-1}), m)`` plus the final iterate."""

    k: np.ndarray
    theta: np.ndarray
    grad: np.ndarray
    m: int
    final_theta: float
    draws: int

    @property
    def trajectory(self):
        return [(int(k), float(th), float(g), self.m)
                for k, th, g in zip(self.k, self.theta, self.grad)]


def sgd_step(theta: float, k: int, grad: Union[GradientEstimate, float],
             config: OptimizerConfig) -> float:
    value = grad.value if isinstance(grad, GradientEstimate) else float(grad)
    new = theta - config.schedule.c / k * value
    if config.clamp:
        lo, hi = config.theta_domain
        new = min(max(new, lo), hi)
    return new


def optimize(model: ModelSpec, config: OptimizerConfig, rng: RngStream,
             record_every: Optional[int] = None, eta: Optional[float] = None) -> OptRunRecord:
    """Run ``config.n`` SGD iterations with a constant batch size.

    Each iteration consumes ``2m`` coupled draws (``4m`` variates), so the
    whole run uses ``n * 2m`` draws.
    """
    if not isinstance(model, TwoAssetPortfolio):
        raise WrongKind(f"{type(model).__name__} is not parameterized")
    n, m = config.n, config.m
    est = config.est_config
    guard = eta_guard(model, est.loss, est.bracket) if eta is None else float(eta)
    if record_every is None:
        marks = geometric_checkpoints(n)
    else:
        marks = np.arange(record_every, n + 1, record_every, dtype=np.int64)
        if not len(marks) or marks[-1] != n:
            marks = np.append(marks, n)
    out_theta = np.empty(len(marks))
    out_grad = np.empty(len(marks))
    out_bm = np.empty(len(marks))

    lam, tl, tu, c_est, alpha_est, code, a, b = est.kernel_args()
    lo, hi = config.theta_domain
    per_iter = 4 * m
    iters_per_chunk = max(1, _CHUNK_VARIATES // per_iter)
    theta = float(config.theta0)
    k_next, rec_pos = 1, 0
    while k_next <= n:
        n_iter = min(iters_per_chunk, n - k_next + 1)
        z = rng.normals(n_iter * per_iter)
        theta, k_last, status, rec_pos, b_m = _kernels.optimize_chunk(
            z, theta, k_next, n_iter, m, *model_args(model), float(est.t0),
            lam, tl, tu, c_est, alpha_est, code, a, b,
            float(config.schedule.c), lo, hi, bool(config.clamp), guard,
            marks, rec_pos, out_theta, out_grad, out_bm)
        if status == _kernels.BELOW_ETA:
            raise BmBelowEta(f"B_m={b_m:.4g} <= guard {guard:.4g} at iteration {k_last}",
                             b_m=b_m, k=k_last)
        if status != _kernels.OK:
            raise DomainOverflow(f"loss overflow at iteration {k_last}")
        k_next += n_iter
    return OptRunRecord(k=marks, theta=out_theta, grad=out_grad, m=m,
                        final_theta=theta, draws=n * 2 * m)
