"""Closed-form non-asymptotic error bounds and the constants that feed them.

Each evaluator checks the hypotheses of its bound and raises
:class:`~shortfall.errors.RegimeViolation` naming the violated inequality.
Exponential prefactors are assembled in log space so that large ``n0``
does not overflow before the decaying factor is applied.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np
from scipy import optimize

from .errors import CaseMismatch, RegimeViolation
from .losses import Exponential, Identity, LossSpec
from .models import GaussianLoss, ModelSpec, RngStream, TruncatedGaussianLoss, draw_many

PI2_6 = math.pi**2 / 6.0


@dataclass(frozen=True)
class BoundParams:
    """Assumption constants. Only the fields a given bound uses must be set.

    ``init_err2`` is the squared initial error ``(t0 - t*)**2`` (or
    ``(theta0 - theta*)**2`` for the optimization bound).
    """

    mu1: Optional[float] = None
    sigma2: Optional[float] = None
    L1: Optional[float] = None
    nu: Optional[float] = None
    B: Optional[float] = None
    c: Optional[float] = None
    alpha: float = 1.0
    n0: int = 1
    init_err2: float = 0.0
    mu2: Optional[float] = None
    rho: float = 1.0
    eta: Optional[float] = None
    beta1: Optional[float] = None
    beta2: Optional[float] = None
    M1: Optional[float] = None
    M2: Optional[float] = None
    L3: Optional[float] = None
    L2: Optional[float] = None

    def replace(self, **changes) -> "BoundParams":
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)


def _need(p: BoundParams, *names):
    vals = []
    for name in names:
        v = getattr(p, name)
        if v is None:
            raise ValueError(f"BoundParams.{name} is required for this bound")
        if name != "init_err2" and v < 0:
            raise RegimeViolation(f"{name} must be non-negative, got {v}")
        vals.append(float(v))
    return vals


def _check_n(n):
    if n < 1:
        raise ValueError("n must be >= 1")


def _known_mu_regime(mu1, c):
    if not 0.5 < mu1 * c < 1.0:
        raise RegimeViolation(f"need 1/2 < mu1*c < 1, got mu1*c = {mu1 * c:.6g}")


def thm1_mse(p: BoundParams, n: int) -> float:
    """Mean-squared error bound for ``a_k = c/k`` with ``1/2 < mu1 c < 1``."""
    _check_n(n)
    mu1, c, sigma2 = _need(p, "mu1", "c", "sigma2")
    _known_mu_regime(mu1, c)
    e = 2.0 * mu1 * c
    return p.init_err2 / n**e + sigma2 * 2.0**e * c**2 / ((e - 1.0) * n)


def _c1(mu1, c, L1, nu):
    e = 2.0 * mu1 * c
    return (e - 1.0) / (2.0 ** (2.0 * e + 6.0) * c**2 * L1**2 * nu**2)


def thm2_hp(p: BoundParams, n: int, delta: float) -> float:
    """High-probability bound on ``|t_n - t*|`` for ``a_k = c/k``.

    Holds with probability at least ``1 - delta``; requires additionally
    ``c L1^2 < mu1``.
    """
    _check_n(n)
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    mu1, c, sigma2, L1, nu = _need(p, "mu1", "c", "sigma2", "L1", "nu")
    _known_mu_regime(mu1, c)
    if not c * L1**2 < mu1:
        raise RegimeViolation(f"need c*L1^2 < mu1, got {c * L1**2:.6g} >= {mu1:.6g}")
    e = 2.0 * mu1 * c
    conc = math.sqrt(math.log(1.0 / delta) / (_c1(mu1, c, L1, nu) * n))
    init = math.sqrt(p.init_err2) / n ** (mu1 * c)
    noise = c * math.sqrt(sigma2) * 2.0**e / math.sqrt((e - 1.0) * n)
    return conc + init + noise


def _universal_regime(p, mu1, c, n):
    if n < p.n0:
        raise RegimeViolation(f"need n >= n0, got n={n} < n0={p.n0}")
    a_n0 = c / p.n0**p.alpha
    if not mu1 * a_n0 < 1.0:
        raise RegimeViolation(f"need mu1*a_n0 < 1, got {mu1 * a_n0:.6g}")


def log_c_n0(p: BoundParams, case: str) -> float:
    """Logarithm of the burn-in constant ``C(n0)``."""
    mu1, c, B = _need(p, "mu1", "c", "B")
    base = p.n0 * math.log1p(c**2 * B**2)
    if case == "poly_one":
        return base + 2.0 * mu1 * c * math.log(p.n0 + 1.0)
    a = p.alpha
    return base + 2.0 * mu1 * c * p.n0 ** (1.0 - a) / (1.0 - a)


def thm3_mse(p: BoundParams, n: int, case: str) -> float:
    """Universal-step bound; ``case`` is ``"poly_one"`` (c/k) or ``"poly_alpha"`` (c/k^alpha)."""
    _check_n(n)
    mu1, c, sigma2, _ = _need(p, "mu1", "c", "sigma2", "B")
    if case == "poly_one":
        if p.alpha != 1.0:
            raise CaseMismatch(f"poly_one needs alpha = 1, got {p.alpha}")
    elif case == "poly_alpha":
        if not 0.0 < p.alpha < 1.0:
            raise CaseMismatch(f"poly_alpha needs alpha in (0, 1), got {p.alpha}")
    else:
        raise CaseMismatch(f"unknown case {case!r}")
    _universal_regime(p, mu1, c, n)
    lc = log_c_n0(p, case)
    mc = mu1 * c

    if case == "poly_one":
        lead = p.init_err2 + sigma2 * PI2_6
        first = math.exp(lc - 2.0 * mc * math.log(n)) * lead if lead > 0 else 0.0
        if math.isclose(mc, 0.5, rel_tol=0.0, abs_tol=1e-12):
            k1 = 2.0 * sigma2 * c**2 * math.log(n + 1.0) / n
        elif mc > 0.5:
            k1 = 2.0 ** (4.0 * mc) * c**2 * sigma2 / ((2.0 * mc - 1.0) * n)
        else:
            k1 = sigma2 * 2.0 ** (2.0 * mc + 1.0) * c**2 / ((1.0 - 2.0 * mc) * n ** (2.0 * mc))
        return first + k1

    a = p.alpha
    lead = p.init_err2 + sigma2 * c**2 * p.n0
    decay = 2.0 * mc * n ** (1.0 - a) / (1.0 - a)
    first = math.exp(lc - decay) * lead if lead > 0 else 0.0
    second = 2.0 * sigma2 * c**2 * (2.0 * mc) ** (a / (1.0 - a)) / ((1.0 - a) * n**a)
    return first + second


def thm4_hp(p: BoundParams, n: int, delta: float) -> float:
    """High-probability bound on ``|t_n - t*|`` for ``a_k = c/k^alpha``.

    The first constant groups its concentration piece as
    ``log(1/delta) * (1 + c^2 L1^2)^(n0+1) * c^2 / (c^2 L1^2)`` under the
    square root.
    """
    _check_n(n)
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    mu1, c, sigma2, L1, nu, _ = _need(p, "mu1", "c", "sigma2", "L1", "nu", "B")
    a = p.alpha
    if not 0.0 < a < 1.0:
        raise RegimeViolation(f"need alpha in (0, 1), got {a}")
    if n < p.n0:
        raise RegimeViolation(f"need n >= n0, got n={n} < n0={p.n0}")
    a_n0 = c / p.n0**a
    if not L1**2 * a_n0 < mu1:
        raise RegimeViolation(f"need L1^2*a_n0 < mu1, got {L1**2 * a_n0:.6g} >= {mu1:.6g}")
    log_inv = math.log(1.0 / delta)
    mc = mu1 * c
    expo = a / (1.0 - a)
    decay = mc * n ** (1.0 - a) / (2.0 * (1.0 - a))

    # C2 * exp(-decay), both pieces of C2 assembled in log space
    head = 0.0
    if log_inv > 0:
        log_conc = (math.log(log_inv) + (p.n0 + 1) * math.log1p(c**2 * L1**2)
                    + 2.0 * math.log(c) - math.log(c**2 * L1**2))
        head += 8.0 * L1 * nu * math.exp(0.5 * log_conc - decay)
    lead = p.init_err2 + sigma2 * c**2 * p.n0
    if lead > 0:
        head += math.exp(0.5 * (log_c_n0(p, "poly_alpha") + math.log(lead)) - decay)

    c3 = (8.0 * L1 * nu * math.sqrt(log_inv * 2.0 * mc**expo * c**2 / (1.0 - a))
          + math.sqrt(sigma2 * 2.0 * (2.0 * mc) ** expo * c**2 / (1.0 - a)))
    return head + c3 / n ** (a / 2.0)


def thm4_constants(p: BoundParams, delta: float) -> tuple[float, float]:
    """``(C2, C3)`` of the universal-step high-probability bound (may be ``inf``)."""
    mu1, c, sigma2, L1, nu = _need(p, "mu1", "c", "sigma2", "L1", "nu")
    a = p.alpha
    log_inv = math.log(1.0 / delta)
    mc = mu1 * c
    expo = a / (1.0 - a)
    try:
        conc2 = 8.0 * L1 * nu * math.sqrt(log_inv * (1.0 + c**2 * L1**2) ** (p.n0 + 1) * c**2 / (c**2 * L1**2))
        c2 = conc2 + math.sqrt(math.exp(log_c_n0(p, "poly_alpha"))
                               * (p.init_err2 + sigma2 * c**2 * p.n0))
    except OverflowError:
        c2 = math.inf
    c3 = (8.0 * L1 * nu * math.sqrt(log_inv * 2.0 * mc**expo * c**2 / (1.0 - a))
          + math.sqrt(sigma2 * 2.0 * (2.0 * mc) ** expo * c**2 / (1.0 - a)))
    return c2, c3


def opt_constants(p: BoundParams, C4: float, C5: float) -> tuple[float, float]:
    """``(C6, C7)`` of the SGD bound from the derivative-error constants."""
    mu2, c = _need(p, "mu2", "c")
    e = 2.0 * mu2 * c
    c6 = 3.0 * C5 * 2.0**e * c**2 / (e - 1.0)
    c7 = 3.0 * C4**2 * c**2 * 2.0 ** (2.0 * e) / (mu2 * c) ** 2
    return c6, c7


def thm5_mse(p: BoundParams, n: int, m: float, C4: float, C5: float) -> float:
    """Bound on ``E(theta_n - theta*)^2`` with batch size ``m`` (``m = inf`` allowed)."""
    _check_n(n)
    mu2, c = _need(p, "mu2", "c")
    if not mu2 * c > 0.5:
        raise RegimeViolation(f"need mu2*c > 1/2, got {mu2 * c:.6g}")
    if not m >= 1:
        raise ValueError("batch size m must be >= 1")
    c6, c7 = opt_constants(p, C4, C5)
    return 3.0 * p.init_err2 / n ** (2.0 * mu2 * c) + c6 / n + (c7 / m if math.isfinite(m) else 0.0)


def cor1_mse(p: BoundParams, n: int, C4: float, C5: float) -> float:
    """SGD bound with the horizon-dependent batch ``m = n**rho``."""
    return thm5_mse(p, n, n**p.rho, C4, C5)


def lemma1_c4(p: BoundParams, varsigma: float) -> float:
    """First-moment constant of the derivative estimator.

    ``varsigma`` is the universal constant of the empirical Wasserstein rate;
    it has no known numeric value and must be supplied.
    """
    mu1, eta, b1, b2, L1, L2, L3, M1, M2 = _need(
        p, "mu1", "eta", "beta1", "beta2", "L1", "L2", "L3", "M1", "M2")
    return (math.sqrt(b2) * (L1 * L3 + M2 * L2) * varsigma * M1
            + math.sqrt(b1) * L2 * varsigma * M1) / (mu1 * eta)


def lemma1_c5(p: BoundParams) -> float:
    """Second-moment constant ``4 beta1 beta2 / (mu1 eta)^2``."""
    mu1, eta, b1, b2 = _need(p, "mu1", "eta", "beta1", "beta2")
    return (2.0 * b2 * b1 + 2.0 * b1 * b2) / (mu1**2 * eta**2)


def n0_for(p: BoundParams, lipschitz: bool = False) -> int:
    """Smallest ``n0`` with ``mu1 a_n0 < 1`` (or ``L1^2 a_n0 < mu1`` when ``lipschitz``)."""
    mu1, c = _need(p, "mu1", "c")
    lhs = p.L1**2 if lipschitz else mu1
    rhs = mu1 if lipschitz else 1.0
    # a_n0 = c / n0^alpha < rhs / lhs
    n0 = (lhs * c / rhs) ** (1.0 / p.alpha)
    k = max(1, math.floor(n0))
    while lhs * c / k**p.alpha >= rhs:
        k += 1
    return k


def subgaussian_nu(model: ModelSpec) -> float:
    """Smallest ``nu`` with ``E[exp(X^2 / (2 nu^2))] <= 2`` for ``X = -xi``."""
    if isinstance(model, GaussianLoss):
        m, s = model.mean, model.std

        def excess(nu2):
            # log of E exp(X^2 / 2nu^2) minus log 2
            a = 1.0 / (2.0 * nu2)
            r = 1.0 - 2.0 * a * s**2
            return a * m**2 / r - 0.5 * math.log(r) - math.log(2.0)

        lo = s**2 * (1.0 + 1e-12) + 1e-300
        hi = max(1.0, 4.0 * (s**2 + m**2))
        while excess(hi) > 0:
            hi *= 2.0
        if excess(lo) <= 0:
            return math.sqrt(lo)
        return math.sqrt(optimize.brentq(excess, lo, hi, xtol=1e-14, rtol=1e-13))
    if isinstance(model, TruncatedGaussianLoss):
        # |X| <= r a.s. gives E exp(X^2 / 2nu^2) <= exp(r^2 / 2nu^2)
        r = max(abs(v) for v in model.xi_range())
        return max(r, 1e-300) / math.sqrt(2.0 * math.log(2.0))
    raise NotImplementedError(f"no sub-Gaussian constant for {type(model).__name__}")


def measure_constants(model: ModelSpec, loss: LossSpec, lam: float, bracket,
                      rng: Optional[RngStream] = None, grid: int = 41,
                      pilot: int = 200_000, width: float = 6.0) -> dict:
    """Monotonicity, slope and noise constants of ``g`` over ``bracket``.

    Returns ``mu1 = min |g'|``, ``B = max |g'|``, ``sigma2 = max Var(l(xi - t))``
    and the interval-local Lipschitz constant ``L1`` of ``l`` on the reachable
    range of ``xi - t``. Closed forms are used for Gaussian ``xi`` under the
    exponential and identity losses; otherwise the quantities are estimated
    on a ``t`` grid from a pilot sample.
    """
    tl, tu = bracket
    xlo, xhi = model.xi_range(width)
    interval = (xlo - tu, xhi - tl)
    out = {"interval": interval, "method": "closed_form"}
    if isinstance(model, GaussianLoss) and isinstance(loss, Exponential):
        b, m, v = loss.beta, model.mean, model.std**2
        out["mu1"] = b * math.exp(b * (m - tu) + b**2 * v / 2.0)
        out["B"] = b * math.exp(b * (m - tl) + b**2 * v / 2.0)
        out["sigma2"] = math.exp(2.0 * b * (m - tl)) * (math.exp(2.0 * b**2 * v) - math.exp(b**2 * v))
    elif isinstance(model, GaussianLoss) and isinstance(loss, Identity):
        out["mu1"] = out["B"] = 1.0
        out["sigma2"] = model.std**2
    else:
        if rng is None:
            rng = RngStream(0, 0)
        xi = draw_many(model, rng, pilot)
        ts = np.linspace(tl, tu, grid)
        slopes = np.array([np.mean(loss.deriv1(xi - t)) for t in ts])
        variances = np.array([np.var(loss(xi - t)) for t in ts])
        out.update(mu1=float(slopes.min()), B=float(slopes.max()),
                   sigma2=float(variances.max()), method="monte_carlo")
    out["L1"] = float(loss.deriv1(interval[1]))
    try:
        out["nu"] = subgaussian_nu(model)
    except NotImplementedError:
        out["nu"] = None
    return out
