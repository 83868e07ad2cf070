# %% [markdown]
# Two step-size regimes
#
# With a_k = c/k the mean-squared error falls like 1/n, but only if c is
# tuned to the slope of g. The universal choice a_k = c/k^alpha needs no
# tuning and pays with a slower n^-alpha rate. Both are compared here with
# their theoretical bounds.

# %%
import math
import tempfile

from shortfall import Exponential, GaussianLoss
from shortfall.experiments import ExperimentConfig, fit_rate, run

common = dict(experiment="EstimateRate", model=GaussianLoss(0.0, 1.0), loss=Exponential(1.0),
              lam=1.0, n_grid=(1000, 3162, 10000, 31623, 100000), replications=200,
              seed=11, bracket=(-2.0, 3.0))

for schedule in ({"mu_c": 0.75, "alpha": 1.0}, {"c": 1.0, "alpha": 0.7}):
    res = run(ExperimentConfig(schedule=schedule, **common), out=tempfile.mkdtemp())
    print("schedule", schedule)
    for row in res.rows:
        print(f"  n={row[1]:>6}  mse={row[4]:.3e} +- {row[5]:.1e}   bound={row[6]:.3e}")
    fit = fit_rate([(r[1], r[4]) for r in res.rows])
    print(f"  fitted slope {fit.slope:.3f}  (r2 = {fit.r2:.4f})\n")
