import csv
import json
import math

import numpy as np
import pytest

from shortfall import Exponential, GaussianLoss, Identity, TruncatedGaussianLoss, TwoAssetPortfolio
from shortfall import bounds as bd
from shortfall.errors import ConfigError, NonPositiveValue, SchemaMismatch
from shortfall.experiments import (RATES_COLUMNS, ExperimentConfig, compare_bounds, fit_rate,
                                   load_meta_config, run)


def small_cfg(**kw):
    base = dict(experiment="EstimateRate", model=GaussianLoss(0.0, 1.0), loss=Exponential(1.0),
                lam=1.0, schedule={"mu_c": 0.75, "alpha": 1.0}, n_grid=(100, 1000, 3000),
                replications=20, seed=5, bracket=(-2.0, 3.0))
    base.update(kw)
    return ExperimentConfig(**base)


def test_fit_rate_examples():
    f = fit_rate([(10, 1e-1), (100, 1e-2), (1000, 1e-3)])
    assert f.slope == pytest.approx(-1.0, abs=1e-12) and f.r2 == pytest.approx(1.0, abs=1e-12)
    assert fit_rate([(10, 1), (100, 1), (1000, 1)]).slope == 0.0
    p = bd.BoundParams(mu1=1.0, c=0.75, sigma2=0.0, init_err2=1.0)
    pts = [(n, bd.thm1_mse(p, n)) for n in (10, 100, 1000, 10**4)]
    assert fit_rate(pts).slope == pytest.approx(-1.5, abs=1e-9)


def test_fit_rate_errors():
    with pytest.raises(NonPositiveValue):
        fit_rate([(10, 1.0), (100, 0.0), (1000, 1.0)])
    with pytest.raises(ValueError):
        fit_rate([(10, 1.0), (100, 0.5)])


def write_rates(path, rows, header=RATES_COLUMNS):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def test_compare_bounds(tmp_path):
    p = tmp_path / "rates.csv"
    write_rates(p, [["x", 10, "", 5, 0.5, 0.1, "inf", ""], ["x", 20, "", 5, 9.0, 1.0, "inf", ""]])
    assert compare_bounds(p).passed
    write_rates(p, [["x", 10, "", 5, 1.0, 0.1, 1.2, ""]])
    rep = compare_bounds(p)
    assert not rep.passed and len(rep.failures) == 1
    assert rep.rows[0]["lhs"] == pytest.approx(1.3)
    write_rates(p, [["x", 10, 1.0, 0.1, 1.2]], header=["experiment", "n", "empirical_mse", "stderr", "bound"])
    with pytest.raises(SchemaMismatch):
        compare_bounds(p)


def test_config_validation():
    with pytest.raises(ConfigError, match="replications"):
        small_cfg(replications=1)
    with pytest.raises(ConfigError, match="strictly increasing"):
        small_cfg(n_grid=(100, 100, 1000))
    with pytest.raises(ConfigError):
        small_cfg(experiment="Nope")
    with pytest.raises(ConfigError):
        small_cfg(schedule={"alpha": 1.0})
    with pytest.raises(ConfigError):
        small_cfg(experiment="GradientRate")


def test_rates_schema_and_meta_round_trip(tmp_path):
    cfg = small_cfg()
    res = run(cfg, out=tmp_path)
    with open(tmp_path / "rates.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == RATES_COLUMNS
    assert len(rows) == 4 and all(r[2] == "" for r in rows[1:])
    assert load_meta_config(tmp_path / "meta.json") == cfg
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["measured"]["mu1"] == pytest.approx(math.exp(-2.5))
    assert meta["content_hash"] == __import__("hashlib").sha256((tmp_path / "rates.csv").read_bytes()).hexdigest()
    traj = (tmp_path / "trajectories.csv").read_text().splitlines()
    assert traj[0] == "replication,k,t_k"
    assert compare_bounds(tmp_path / "rates.csv").passed


def test_byte_identical_reruns_and_worker_independence(tmp_path):
    cfg = small_cfg()
    run(cfg, out=tmp_path / "a")
    run(cfg, out=tmp_path / "b")
    run(cfg, out=tmp_path / "c", jobs=2)
    a = (tmp_path / "a" / "rates.csv").read_bytes()
    assert a == (tmp_path / "b" / "rates.csv").read_bytes()
    assert a == (tmp_path / "c" / "rates.csv").read_bytes()
    assert (tmp_path / "a" / "meta.json").read_bytes() == (tmp_path / "c" / "meta.json").read_bytes()


def test_saa_compare_degenerate(tmp_path):
    cfg = ExperimentConfig(experiment="SaaCompare", model=GaussianLoss(1.0, 0.0), loss=Identity(),
                           lam=0.0, schedule={"c": 1.0, "alpha": 1.0}, n_grid=(10, 100),
                           replications=3, seed=1)
    res = run(cfg, out=tmp_path)
    np.testing.assert_allclose(res.extra["sa"], 1.0, atol=1e-6)
    np.testing.assert_allclose(res.extra["saa"], 1.0, atol=1e-6)
    assert (tmp_path / "saa_compare.csv").read_text().startswith("replication,n,sa,saa,oracle")


def test_stderr_scales_with_replications(tmp_path):
    se = []
    for r in (100, 400):
        # identity loss keeps the squared errors light-tailed, so the stderr estimate is stable
        cfg = small_cfg(replications=r, n_grid=(100, 200, 400, 800, 1600, 3200, 6400, 12800),
                        loss=Identity(), lam=-0.5,
                        schedule={"c": 0.75, "alpha": 1.0})
        res = run(cfg, out=tmp_path / str(r))
        se.append(np.array([row[5] for row in res.rows]))
    # one row's stderr ratio has ~20% noise at R = 100; average over the grid
    ratio = float(np.mean(se[0] / se[1]))
    assert abs(ratio - 2.0) <= 0.4, ratio


def test_gradient_and_optimize_outputs(tmp_path):
    port = TwoAssetPortfolio(0.5, 0.0, 1.0, 1.0, (0.0, 1.0))
    g = ExperimentConfig(experiment="GradientRate", model=port, loss=Exponential(1.0), lam=1.0,
                         schedule={"mu_c": 0.75}, n_grid=(1,), m_grid=(10, 100, 1000),
                         replications=10, seed=2)
    res = run(g, out=tmp_path / "g")
    assert [r[1] for r in res.rows] == [10, 100, 1000] == [r[2] for r in res.rows]
    assert (tmp_path / "g" / "gradient.csv").exists()
    o = ExperimentConfig(experiment="OptimizeRate", model=port, loss=Exponential(1.0), lam=1.0,
                         schedule={"mu_c": 0.75}, n_grid=(10, 30, 100), batch={"rho": 0.5},
                         replications=5, seed=3, C4=1.0, C5=1.0)
    res = run(o, out=tmp_path / "o")
    assert [r[2] for r in res.rows] == [4, 6, 10]
    assert all(math.isfinite(r[6]) for r in res.rows)
    head = (tmp_path / "o" / "trajectories.csv").read_text().splitlines()[0]
    assert head == "replication,k,theta_k,grad,m"
    assert load_meta_config(tmp_path / "o" / "meta.json") == o


def test_hp_output(tmp_path):
    cfg = ExperimentConfig(experiment="EstimateHP", model=GaussianLoss(0, 1), loss=Identity(), lam=-0.5,
                           schedule={"c": 0.75}, n_grid=(100, 1000), replications=40, seed=4,
                           bracket=(-2.0, 3.0), delta=0.1)
    res = run(cfg, out=tmp_path)
    errs = res.extra["abs_err"]
    k = math.ceil(0.9 * 40)
    assert res.extra["quantiles"][0] == np.sort(errs[:, 0])[k - 1]
    assert all(q <= b for q, b in zip(res.extra["quantiles"], res.extra["hp_bounds"]))
