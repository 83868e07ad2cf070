"""Projected stochastic-approximation estimator of utility-based shortfall risk.

The shortfall ``t*`` is the root of ``g(t) = E[l(xi - t)] - lam``, a
decreasing function of ``t``. Each sample moves the iterate by
``a_k * (l(xi_k - t_{k-1}) - lam)`` and the result is clamped to the bracket
``[t_l, t_u]``.

A sample-average (bisection) baseline and a doubling bracket search are
included for comparison and set-up.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize as _opt

from . import _kernels
from .errors import BracketNotFound, DomainOverflow, NoSignChange
from .losses import LossSpec
from .models import ModelSpec, RngStream, TwoAssetPortfolio, draw_many, pair_draws

log = logging.getLogger(__name__)

_CHUNK = 1 << 16


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``a_k = c / k**alpha``; ``alpha = 1`` is the known-monotonicity regime."""

    c: float
    alpha: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")

    def __call__(self, k: int) -> float:
        return step_size(self, k)


def step_size(schedule: StepSchedule, k: int) -> float:
    if k < 1:
        raise ValueError("step index starts at 1")
    return float(_kernels.step_size(float(schedule.c), float(schedule.alpha), int(k)))


@dataclass(frozen=True)
class EstimatorConfig:
    loss: LossSpec
    lam: float
    bracket: tuple[float, float]
    schedule: StepSchedule
    t0: Optional[float] = None

    def __post_init__(self):
        tl, tu = self.bracket
        if not tl < tu:
            raise ValueError(f"bracket needs t_l < t_u, got {self.bracket}")
        object.__setattr__(self, "bracket", (float(tl), float(tu)))
        self.loss.check_level(self.lam)
        if self.t0 is None:
            object.__setattr__(self, "t0", 0.5 * (tl + tu))
        elif not tl <= self.t0 <= tu:
            raise ValueError(f"t0={self.t0} outside bracket {self.bracket}")

    def kernel_args(self):
        code, a, b = self.loss.kernel_args()
        tl, tu = self.bracket
        return (float(self.lam), tl, tu, float(self.schedule.c),
                float(self.schedule.alpha), code, a, b)


@dataclass
class EstimatorState:
    t: float
    k: int = 0


@dataclass
class Trajectory:
    """Iterates ``t_k`` recorded at the iteration numbers ``k``."""

    k: np.ndarray
    t: np.ndarray

    @property
    def final(self) -> float:
        return float(self.t[-1])

    def __len__(self):
        return len(self.k)


def g_hat(loss: LossSpec, lam: float, xi: float, t: float) -> float:
    """Single-sample estimate ``l(xi - t) - lam`` of ``g(t)``."""
    return loss(xi - t) - lam


def project(t: float, bracket: Sequence[float]) -> float:
    tl, tu = bracket
    return min(max(tl, t), tu)


def sa_step(state: EstimatorState, config: EstimatorConfig, xi: float) -> EstimatorState:
    """Advance the iterate by one sample."""
    t, k, status = _kernels.sa_step(float(state.t), int(state.k), float(xi),
                                    *config.kernel_args())
    if status != _kernels.OK:
        raise DomainOverflow(f"loss overflow at xi - t = {xi - state.t}")
    return EstimatorState(t=t, k=k)


def run_sa(samples: np.ndarray, config: EstimatorConfig,
           state: Optional[EstimatorState] = None) -> EstimatorState:
    """Replay a fixed sample array through the recursion."""
    if state is None:
        state = EstimatorState(t=config.t0)
    xi = np.ascontiguousarray(samples, dtype=float)
    t, k, status = _kernels.sa_run(xi, float(state.t), int(state.k), *config.kernel_args())
    if status != _kernels.OK:
        raise DomainOverflow(f"loss overflow at iteration {k + 1}")
    return EstimatorState(t=t, k=k)


def geometric_checkpoints(n: int, ratio: float = 1.3) -> np.ndarray:
    """Roughly geometric iteration numbers in ``[1, n]``, always including ``n``."""
    pts = {1, n}
    x = 1.0
    while x < n:
        pts.add(int(round(x)))
        x *= ratio
    return np.array(sorted(p for p in pts if 1 <= p <= n), dtype=np.int64)


def _sampler(model: ModelSpec, theta: Optional[float]):
    if isinstance(model, TwoAssetPortfolio):
        if theta is None:
            raise ValueError("theta is required for a parameterized model")
        return lambda rng, size: pair_draws(model, theta, rng, size)[0]
    return lambda rng, size: draw_many(model, rng, size)


def estimate(model: ModelSpec, config: EstimatorConfig, n: int, rng: RngStream,
             record_every: Optional[int] = None, checkpoints=None,
             theta: Optional[float] = None) -> Trajectory:
    """Run ``n`` SA iterations on fresh draws from ``model``.

    The trajectory holds ``t_k`` at multiples of ``record_every`` (or at the
    given ``checkpoints``, or at geometric checkpoints by default) plus
    ``k = n``. Exactly ``n`` samples are consumed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if checkpoints is not None:
        marks = np.unique(np.asarray(checkpoints, dtype=np.int64))
        marks = marks[(marks >= 1) & (marks <= n)]
        if not len(marks) or marks[-1] != n:
            marks = np.append(marks, n)
    elif record_every is not None:
        marks = np.arange(record_every, n + 1, record_every, dtype=np.int64)
        if not len(marks) or marks[-1] != n:
            marks = np.append(marks, n)
    else:
        marks = geometric_checkpoints(n)

    sample = _sampler(model, theta)
    state = EstimatorState(t=config.t0)
    ts = np.empty(len(marks))
    for i, mark in enumerate(marks):
        while state.k < mark:
            size = min(_CHUNK, int(mark) - state.k)
            state = run_sa(sample(rng, size), config, state)
        ts[i] = state.t

    tl, tu = config.bracket
    tol = 1e-9 * (tu - tl)
    if n >= 100 and min(state.t - tl, tu - state.t) <= tol:
        log.warning("final iterate %.6g sits on the bracket edge; the root may lie outside %s",
                    state.t, config.bracket)
    return Trajectory(k=marks, t=ts)


def empirical_g(samples: np.ndarray, loss: LossSpec, lam: float, t: float) -> float:
    return float(np.mean(loss(np.asarray(samples) - t))) - lam


def saa_binary_search(samples, loss: LossSpec, lam: float, bracket: Sequence[float],
                      tol: Optional[float] = None) -> float:
    """Root of the empirical ``g`` by bisection on ``bracket``."""
    tl, tu = float(bracket[0]), float(bracket[1])
    if tol is None:
        tol = 1e-10 * (tu - tl)
    xi = np.asarray(samples, dtype=float)
    f = lambda t: empirical_g(xi, loss, lam, t)  # noqa: E731
    g_lo, g_hi = f(tl), f(tu)
    if g_lo == 0.0:
        return tl
    if g_hi == 0.0:
        return tu
    if not (g_lo > 0.0 and g_hi < 0.0):
        raise NoSignChange(f"empirical g is {g_lo:.4g} at {tl} and {g_hi:.4g} at {tu}")
    return float(_opt.bisect(f, tl, tu, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200))


def _g_and_margin(xi, loss, lam, t):
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            vals = loss(xi - t)
        except DomainOverflow:
            return math.inf, 0.0
        g = float(np.mean(vals)) - lam
        margin = 2.0 * float(np.std(vals, ddof=1)) / math.sqrt(len(xi))
    return g, margin


def bracket_search(model: ModelSpec, loss: LossSpec, lam: float, pilot_m: int,
                   rng: RngStream, theta: Optional[float] = None,
                   max_doublings: int = 64) -> tuple[float, float]:
    """Find ``[t_l, t_u]`` with the empirical ``g`` clearly positive/negative at the ends.

    Starts from ``[-1, 1]`` and doubles each end outward until ``g(t_l)`` and
    ``-g(t_u)`` exceed two standard errors of the pilot mean.
    """
    if pilot_m < 32:
        raise ValueError("pilot_m must be at least 32")
    xi = _sampler(model, theta)(rng, pilot_m)

    def search(start, want_positive):
        t = start
        for _ in range(max_doublings + 1):
            g, margin = _g_and_margin(xi, loss, lam, t)
            if want_positive and g > margin:
                return t
            if not want_positive and -g > margin:
                return t
            t *= 2.0
        side = "lower" if want_positive else "upper"
        raise BracketNotFound(f"no {side} bracket end after {max_doublings} doublings")

    return search(-1.0, True), search(1.0, False)
