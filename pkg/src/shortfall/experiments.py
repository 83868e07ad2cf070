"""Seeded Monte-Carlo experiments comparing empirical errors with the bounds.

An experiment is described by :class:`ExperimentConfig` (JSON on disk).
Replication ``r`` always draws from ``RngStream(seed, r)``, and per-replication
results are reduced in replication order, so output files do not depend on
how replications are scheduled across workers.

Every run writes ``rates.csv`` (frozen schema, see ``RATES_COLUMNS``) and
``meta.json``; some experiments add a detail file.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
from scipy import stats

from . import bounds as bd
from .errors import (ConfigError, NonPositiveValue, OracleUnavailable,
                     RegimeViolation, SchemaMismatch)
from .estimator import (EstimatorConfig, StepSchedule, bracket_search, estimate,
                        geometric_checkpoints, run_sa, saa_binary_search)
from .gradient import estimate_gradient
from .losses import LossSpec, loss_from_dict
from .models import (GaussianLoss, ModelSpec, RngStream, TwoAssetPortfolio,
                     closed_form_sr, closed_form_sr_derivative, draw_many,
                     model_from_dict, portfolio_argmin, portfolio_mu2)
from .optimizer import Fixed, Horizon, OptimizerConfig, optimize

log = logging.getLogger(__name__)

RATES_COLUMNS = ["experiment", "n", "m", "replications", "empirical_mse", "stderr",
                 "bound", "slope_cum"]
EXPERIMENTS = ("estimate_rate", "estimate_hp", "gradient_rate", "optimize_rate", "saa_compare")
_ALIASES = {"EstimateRate": "estimate_rate", "EstimateHP": "estimate_hp",
            "GradientRate": "gradient_rate", "OptimizeRate": "optimize_rate",
            "SaaCompare": "saa_compare"}
# stream ids at the top of the range are reserved for pilot sampling
PILOT_STREAM = (1 << 64) - 1


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment.

    ``schedule`` takes ``alpha`` plus either an explicit ``c`` or ``mu_c``,
    the target product of the monotonicity (or strong-convexity) constant and
    ``c``. ``inner_schedule`` is the SA schedule used for ``t_m`` inside
    derivative estimates.
    """

    experiment: str
    model: ModelSpec
    loss: LossSpec
    lam: float
    schedule: dict
    n_grid: tuple
    replications: int
    seed: int
    m_grid: Optional[tuple] = None
    delta: Optional[float] = None
    batch: Optional[dict] = None
    output_dir: Optional[str] = None
    bracket: Optional[tuple] = None
    theta: Optional[float] = None
    theta0: Optional[float] = None
    t0: Optional[float] = None
    inner_schedule: dict = field(default_factory=lambda: {"mu_c": 0.75, "alpha": 1.0})
    C4: Optional[float] = None
    C5: Optional[float] = None
    pilot_m: int = 10_000

    def __post_init__(self):
        exp = _ALIASES.get(self.experiment, self.experiment)
        if exp not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        object.__setattr__(self, "experiment", exp)
        if self.seed is None:
            raise ConfigError("seed is mandatory")
        if not (isinstance(self.replications, int) and self.replications >= 2):
            raise ConfigError(f"replications must be an integer >= 2 (stderr needs it), got {self.replications!r}")
        for name in ("n_grid", "m_grid"):
            grid = getattr(self, name)
            if grid is None:
                continue
            grid = tuple(int(v) for v in grid)
            if not grid or grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError(f"{name} must be strictly increasing positive integers, got {grid}")
            object.__setattr__(self, name, grid)
        if self.bracket is not None:
            object.__setattr__(self, "bracket", (float(self.bracket[0]), float(self.bracket[1])))
        for name in ("schedule", "inner_schedule"):
            sch = dict(getattr(self, name))
            if ("c" in sch) == ("mu_c" in sch):
                raise ConfigError(f"{name} needs exactly one of 'c' or 'mu_c'")
            sch.setdefault("alpha", 1.0)
            object.__setattr__(self, name, sch)
        self.loss.check_level(self.lam)
        if self.experiment == "estimate_hp" and self.delta is None:
            raise ConfigError("estimate_hp requires delta")
        if self.experiment == "gradient_rate" and self.m_grid is None:
            raise ConfigError("gradient_rate requires m_grid")
        if self.experiment in ("gradient_rate", "optimize_rate") and not isinstance(self.model, TwoAssetPortfolio):
            raise ConfigError(f"{self.experiment} needs a two_asset model")
        if self.experiment in ("estimate_rate", "estimate_hp", "saa_compare") and isinstance(self.model, TwoAssetPortfolio):
            raise ConfigError(f"{self.experiment} needs a non-parameterized model")
        if self.experiment == "optimize_rate" and self.batch is None:
            raise ConfigError("optimize_rate requires batch ({'fixed': m} or {'rho': r})")

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "model": self.model.to_dict(),
            "loss": self.loss.to_dict(),
            "lambda": self.lam,
            "schedule": self.schedule,
            "n_grid": list(self.n_grid),
            "m_grid": None if self.m_grid is None else list(self.m_grid),
            "replications": self.replications,
            "seed": self.seed,
            "delta": self.delta,
            "batch": self.batch,
            "output_dir": self.output_dir,
            "bracket": None if self.bracket is None else list(self.bracket),
            "theta": self.theta,
            "theta0": self.theta0,
            "t0": self.t0,
            "inner_schedule": self.inner_schedule,
            "C4": self.C4,
            "C5": self.C5,
            "pilot_m": self.pilot_m,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            model = model_from_dict(d.pop("model"))
            loss = loss_from_dict(d.pop("loss"))
            lam = float(d.pop("lambda"))
        except KeyError as exc:
            raise ConfigError(f"config is missing {exc}") from None
        known = set(cls.__dataclass_fields__) - {"model", "loss", "lam"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        for name in ("experiment", "schedule", "n_grid", "replications", "seed"):
            if name not in d:
                raise ConfigError(f"config is missing {name!r}")
        try:
            return cls(model=model, loss=loss, lam=lam, **d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    points: tuple


def fit_rate(points: Sequence[tuple[float, float]]) -> RateFit:
    """Least-squares line through ``(log10 n, log10 err)``."""
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if any(n <= 0 or v <= 0 for n, v in pts):
        raise NonPositiveValue("log-log fit needs strictly positive coordinates")
    x = np.log10([n for n, _ in pts])
    y = np.log10([v for _, v in pts])
    if np.ptp(y) == 0:
        return RateFit(0.0, float(y[0]), 1.0, tuple(zip(x.tolist(), y.tolist())))
    res = stats.linregress(x, y)
    return RateFit(float(res.slope), float(res.intercept), float(res.rvalue**2),
                   tuple(zip(x.tolist(), y.tolist())))


def _cum_slopes(ns, vals):
    out = [None]
    for i in range(2, len(ns) + 1):
        if all(v > 0 for v in vals[:i]):
            out.append(float(np.polyfit(np.log10(ns[:i]), np.log10(vals[:i]), 1)[0]))
        else:
            out.append(None)
    return out


# ---------------------------------------------------------------- set-up


def _gaussian_at(model, theta):
    mean, var = model.xi_moments_at(theta)
    return GaussianLoss(mean, math.sqrt(var))


def _resolve_c(schedule, constant):
    if "c" in schedule:
        return float(schedule["c"])
    return float(schedule["mu_c"]) / constant


def prepare(cfg: ExperimentConfig) -> dict:
    """Bracket, measured constants and step sizes shared by all replications."""
    info: dict[str, Any] = {}
    pilot = RngStream(cfg.seed, PILOT_STREAM)
    if isinstance(cfg.model, TwoAssetPortfolio):
        lo, hi = cfg.model.theta_domain
        thetas = np.linspace(lo, hi, 9)
        if cfg.bracket is None:
            ends = [bracket_search(cfg.model, cfg.loss, cfg.lam, cfg.pilot_m, pilot, theta=th)
                    for th in (lo, hi)]
            bracket = (min(e[0] for e in ends), max(e[1] for e in ends))
        else:
            bracket = cfg.bracket
        consts = [bd.measure_constants(_gaussian_at(cfg.model, th), cfg.loss, cfg.lam, bracket, rng=pilot)
                  for th in thetas]
        mu1 = min(c["mu1"] for c in consts)
        info.update(bracket=bracket, mu1=mu1, sigma2=max(c["sigma2"] for c in consts),
                    B=max(c["B"] for c in consts))
        inner = StepSchedule(_resolve_c(cfg.inner_schedule, mu1), cfg.inner_schedule["alpha"])
        info["inner"] = inner
        info["est_config"] = EstimatorConfig(cfg.loss, cfg.lam, bracket, inner)
        mu2 = portfolio_mu2(cfg.model, cfg.loss)
        info["mu2"] = mu2
        if cfg.experiment == "optimize_rate":
            if "c" not in cfg.schedule and not mu2:
                raise OracleUnavailable("strong-convexity constant unknown; give schedule.c")
            info["c"] = _resolve_c(cfg.schedule, mu2)
        return info

    bracket = cfg.bracket or bracket_search(cfg.model, cfg.loss, cfg.lam, cfg.pilot_m, pilot)
    consts = bd.measure_constants(cfg.model, cfg.loss, cfg.lam, bracket, rng=pilot)
    info.update(bracket=bracket, **{k: consts[k] for k in ("mu1", "B", "sigma2", "L1", "nu")})
    info["interval"] = consts["interval"]
    c = _resolve_c(cfg.schedule, consts["mu1"])
    info["c"] = c
    info["est_config"] = EstimatorConfig(cfg.loss, cfg.lam, bracket,
                                         StepSchedule(c, cfg.schedule["alpha"]), t0=cfg.t0)
    return info


# ---------------------------------------------------------- replications


def _rep_estimate(cfg, info, r):
    rng = RngStream(cfg.seed, r)
    marks = np.union1d(geometric_checkpoints(cfg.n_grid[-1]), cfg.n_grid)
    tr = estimate(cfg.model, info["est_config"], cfg.n_grid[-1], rng, checkpoints=marks)
    return tr.k, tr.t


def _rep_gradient(cfg, info, r):
    rng = RngStream(cfg.seed, r)
    theta = _theta(cfg)
    return np.array([estimate_gradient(cfg.model, theta, m, info["est_config"], rng).value
                     for m in cfg.m_grid])


def _rep_optimize(cfg, info, r):
    rng = RngStream(cfg.seed, r)
    finals, trajs = [], []
    for n in cfg.n_grid:
        ocfg = _opt_config(cfg, info, n)
        rec = optimize(cfg.model, ocfg, rng)
        finals.append(rec.final_theta)
        trajs.append(rec)
    last = trajs[-1]
    return np.array(finals), (last.k, last.theta, last.grad, last.m)


def _rep_saa(cfg, info, r):
    rng = RngStream(cfg.seed, r)
    out = []
    for n in cfg.n_grid:
        xi = draw_many(cfg.model, rng, n)
        sa = run_sa(xi, info["est_config"]).t
        saa = saa_binary_search(xi, cfg.loss, cfg.lam, info["bracket"])
        out.append((sa, saa))
    return np.array(out)


_REP = {"estimate_rate": _rep_estimate, "estimate_hp": _rep_estimate,
        "gradient_rate": _rep_gradient, "optimize_rate": _rep_optimize,
        "saa_compare": _rep_saa}


def _rep_block(cfg, info, reps):
    fn = _REP[cfg.experiment]
    return [fn(cfg, info, r) for r in reps]


def replicate(cfg: ExperimentConfig, info: dict, jobs: int = 1) -> list:
    """Per-replication results in replication order."""
    reps = list(range(cfg.replications))
    if jobs <= 1 or len(reps) < 2:
        return _rep_block(cfg, info, reps)
    blocks = [reps[i::jobs] for i in range(jobs)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_rep_block, [cfg] * jobs, [info] * jobs, blocks))
    merged = {}
    for block, part in zip(blocks, parts):
        merged.update(zip(block, part))
    return [merged[r] for r in reps]


def _theta(cfg):
    if cfg.theta is not None:
        return float(cfg.theta)
    lo, hi = cfg.model.theta_domain
    return 0.5 * (lo + hi)


def _opt_config(cfg, info, n):
    b = cfg.batch
    batch = Fixed(int(b["fixed"])) if "fixed" in b else Horizon(float(b["rho"]))
    return OptimizerConfig(theta_domain=cfg.model.theta_domain,
                           schedule=StepSchedule(info["c"], 1.0), batch=batch, n=n,
                           est_config=info["est_config"], theta0=cfg.theta0, mu2=info.get("mu2"))


# --------------------------------------------------------------- bounds


def _estimation_params(cfg, info, t_star):
    t0 = info["est_config"].t0
    return bd.BoundParams(mu1=info["mu1"], sigma2=info["sigma2"], L1=info.get("L1"),
                          nu=info.get("nu"), B=info["B"], c=info["c"],
                          alpha=float(cfg.schedule["alpha"]), init_err2=(t0 - t_star) ** 2)


def estimation_bound(p: bd.BoundParams, n: int) -> float:
    """MSE bound matching the step-size regime of ``p``."""
    if p.alpha == 1.0:
        if 0.5 < p.mu1 * p.c < 1.0:
            return bd.thm1_mse(p, n)
        p = p.replace(n0=bd.n0_for(p))
        return bd.thm3_mse(p, n, "poly_one")
    p = p.replace(n0=bd.n0_for(p))
    if n < p.n0:
        return math.inf
    return bd.thm3_mse(p, n, "poly_alpha")


def hp_bound(p: bd.BoundParams, n: int, delta: float) -> float:
    if p.alpha == 1.0:
        return bd.thm2_hp(p, n, delta)
    p = p.replace(n0=bd.n0_for(p, lipschitz=True))
    return bd.thm4_hp(p, n, delta)


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    data = buf.getvalue().encode()
    path.write_bytes(data)
    return data


def _mse_rows(cfg, ns, ms, sq_err, bounds_):
    sq_err = np.asarray(sq_err)
    mse = sq_err.mean(axis=0)
    se = sq_err.std(axis=0, ddof=1) / math.sqrt(sq_err.shape[0])
    slopes = _cum_slopes(list(ns), list(mse))
    return [[cfg.experiment, n, m, cfg.replications, mse[i], se[i], bounds_[i], slopes[i]]
            for i, (n, m) in enumerate(zip(ns, ms))]


@dataclass
class RunResult:
    output_dir: Path
    rows: list
    meta: dict
    extra: dict


def _json_safe(v):
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items() if k not in ("est_config", "inner")}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def output_dir_for(cfg: ExperimentConfig, out: Optional[str] = None) -> Path:
    d = out or cfg.output_dir or os.environ.get("SHORTFALL_OUT")
    if not d:
        raise ConfigError("no output directory: pass --out, set output_dir, or SHORTFALL_OUT")
    return Path(d)


def run(cfg: ExperimentConfig, out: Optional[str] = None, jobs: int = 1) -> RunResult:
    """Run ``cfg`` and write ``rates.csv`` plus ``meta.json`` into the output directory."""
    outdir = output_dir_for(cfg, out)
    outdir.mkdir(parents=True, exist_ok=True)
    info = prepare(cfg)
    results = replicate(cfg, info, jobs)
    extra: dict[str, Any] = {}
    exp = cfg.experiment

    if exp in ("estimate_rate", "estimate_hp", "saa_compare"):
        t_star = closed_form_sr(cfg.model, cfg.loss, cfg.lam)
        p = None
        if t_star is not None:
            p = _estimation_params(cfg, info, t_star)
        if exp == "saa_compare":
            arr = np.stack(results)  # (R, n_grid, 2)
            ref = arr[:, :, 1] if t_star is None else np.full(arr.shape[:2], t_star)
            sq = (arr[:, :, 0] - ref) ** 2
            rows_detail = [[r, n, arr[r, i, 0], arr[r, i, 1], t_star]
                           for r in range(arr.shape[0]) for i, n in enumerate(cfg.n_grid)]
            _write_csv(outdir / "saa_compare.csv", ["replication", "n", "sa", "saa", "oracle"], rows_detail)
            extra["sa"] = arr[:, :, 0]
            extra["saa"] = arr[:, :, 1]
        else:
            if t_star is None:
                raise OracleUnavailable("no closed-form shortfall for this model/loss")
            ks = results[0][0]
            ts = np.stack([r[1] for r in results])
            idx = np.searchsorted(ks, cfg.n_grid)
            sq = (ts[:, idx] - t_star) ** 2
            traj = [[r, int(k), ts[r, j]] for r in range(ts.shape[0]) for j, k in enumerate(ks)]
            _write_csv(outdir / "trajectories.csv", ["replication", "k", "t_k"], traj)
            extra["abs_err"] = np.sqrt(sq)
        bound_vals = [estimation_bound(p, n) if p is not None else math.inf for n in cfg.n_grid]
        rows = _mse_rows(cfg, cfg.n_grid, [None] * len(cfg.n_grid), sq, bound_vals)
        if exp == "estimate_hp":
            q_rows = []
            k = math.ceil((1.0 - cfg.delta) * cfg.replications)
            quantiles = []
            for i, n in enumerate(cfg.n_grid):
                q = float(np.sort(extra["abs_err"][:, i])[k - 1])
                quantiles.append(q)
                q_rows.append([n, cfg.replications, cfg.delta, q, hp_bound(p, n, cfg.delta)])
            _write_csv(outdir / "hp.csv", ["n", "replications", "delta", "quantile", "bound"], q_rows)
            extra["quantiles"] = quantiles
            extra["hp_bounds"] = [row[-1] for row in q_rows]

    elif exp == "gradient_rate":
        theta = _theta(cfg)
        d_star = closed_form_sr_derivative(cfg.model, cfg.loss, cfg.lam, theta)
        if d_star is None:
            raise OracleUnavailable("no closed-form derivative for this model/loss")
        vals = np.stack(results)
        err = vals - d_star
        rows = _mse_rows(cfg, cfg.m_grid, cfg.m_grid, err**2, [math.inf] * len(cfg.m_grid))
        mae = np.abs(err).mean(axis=0)
        mae_se = np.abs(err).std(axis=0, ddof=1) / math.sqrt(err.shape[0])
        _write_csv(outdir / "gradient.csv",
                   ["m", "replications", "mean_abs_err", "stderr", "second_moment", "mean_value"],
                   [[m, cfg.replications, mae[i], mae_se[i], (err[:, i] ** 2).mean(), vals[:, i].mean()]
                    for i, m in enumerate(cfg.m_grid)])
        extra.update(values=vals, d_star=d_star, mae=mae, mae_se=mae_se)

    elif exp == "optimize_rate":
        theta_star = portfolio_argmin(cfg.model, cfg.loss)
        if theta_star is None:
            raise OracleUnavailable("no closed-form minimizer for this model/loss")
        finals = np.stack([r[0] for r in results])
        sq = (finals - theta_star) ** 2
        ms = [_opt_config(cfg, info, n).m for n in cfg.n_grid]
        if cfg.C4 is not None and cfg.C5 is not None:
            theta0 = _opt_config(cfg, info, cfg.n_grid[0]).theta0
            p = bd.BoundParams(mu2=info["mu2"], c=info["c"], init_err2=(theta0 - theta_star) ** 2)
            bound_vals = [bd.thm5_mse(p, n, m, cfg.C4, cfg.C5) for n, m in zip(cfg.n_grid, ms)]
        else:
            bound_vals = [math.inf] * len(cfg.n_grid)
        rows = _mse_rows(cfg, cfg.n_grid, ms, sq, bound_vals)
        sr_star = closed_form_sr(cfg.model, cfg.loss, cfg.lam, theta_star)
        gap = np.vectorize(lambda th: closed_form_sr(cfg.model, cfg.loss, cfg.lam, th))(finals) - sr_star
        _write_csv(outdir / "optimize.csv",
                   ["n", "m", "replications", "mse", "stderr", "sr_gap", "sr_gap_stderr"],
                   [[n, m, cfg.replications, sq[:, i].mean(), sq[:, i].std(ddof=1) / math.sqrt(len(sq)),
                     gap[:, i].mean(), gap[:, i].std(ddof=1) / math.sqrt(len(gap))]
                    for i, (n, m) in enumerate(zip(cfg.n_grid, ms))])
        traj = [[r, int(k), th, g, res[1][3]]
                for r, res in enumerate(results) for k, th, g in zip(*res[1][:3])]
        _write_csv(outdir / "trajectories.csv", ["replication", "k", "theta_k", "grad", "m"], traj)
        extra.update(finals=finals, theta_star=theta_star, sr_gap=gap, ms=ms)

    data = _write_csv(outdir / "rates.csv", RATES_COLUMNS, rows)
    meta = {
        "config": cfg.to_dict(),
        "measured": _json_safe({k: v for k, v in info.items()}),
        "content_hash": hashlib.sha256(data).hexdigest(),
    }
    (outdir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return RunResult(outdir, rows, meta, extra)


def load_config(path) -> ExperimentConfig:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(d)


def load_meta_config(meta_path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(meta_path).read_text())["config"])


@dataclass
class BoundReport:
    rows: list
    failures: list

    @property
    def passed(self) -> bool:
        return not self.failures


def read_rates(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RATES_COLUMNS:
            raise SchemaMismatch(f"expected columns {RATES_COLUMNS}, got {header}")
        return [dict(zip(header, row)) for row in reader]


def compare_bounds(rates_csv) -> BoundReport:
    """A row passes iff ``empirical_mse + 3 * stderr <= bound``."""
    rows = read_rates(rates_csv)
    checked, failures = [], []
    for row in rows:
        lhs = float(row["empirical_mse"]) + 3.0 * float(row["stderr"])
        bound = float(row["bound"])
        ok = lhs <= bound
        checked.append({**row, "lhs": lhs, "passed": ok})
        if not ok:
            failures.append(row)
    return BoundReport(checked, failures)
