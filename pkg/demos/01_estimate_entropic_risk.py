# %% [markdown]
# Estimating shortfall risk from a stream of losses
#
# The loss xi is N(0, 1) and the loss function is exp(x). At level
# lambda = 1 the shortfall has the closed form 0.5, so we can watch the
# recursive estimate approach it one sample at a time.

# %%
import numpy as np

from shortfall import (EstimatorConfig, Exponential, GaussianLoss, RngStream, StepSchedule,
                       bracket_search, closed_form_sr, estimate)
from shortfall.bounds import measure_constants

model, loss, lam = GaussianLoss(0.0, 1.0), Exponential(1.0), 1.0
t_star = closed_form_sr(model, loss, lam)
print("closed form t* =", t_star)

# %%
# A bracket can be found from a small pilot sample...
bracket = bracket_search(model, loss, lam, pilot_m=10_000, rng=RngStream(0, 99))
print("bracket from pilot:", bracket)

# ...and the slope of g on it tells us how to pick c for a_k = c/k.
consts = measure_constants(model, loss, lam, bracket)
c = 0.75 / consts["mu1"]
print(f"mu1 = {consts['mu1']:.4f}, so c = {c:.3f}")

# %%
config = EstimatorConfig(loss, lam, bracket, StepSchedule(c, 1.0))
traj = estimate(model, config, 100_000, RngStream(0, 0))
for k, t in zip(traj.k[::4], traj.t[::4]):
    print(f"k={k:>7d}  t_k={t: .5f}  |t_k - t*|={abs(t - t_star):.2e}")
print("final:", traj.final)
