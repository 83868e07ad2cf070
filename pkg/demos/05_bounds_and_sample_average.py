# %% [markdown]
# Evaluating the bounds, and the sample-average baseline
#
# The bound evaluators check their own hypotheses. Below: the MSE bound for
# a_k = c/k, the high-probability bound, and a side by side of the
# recursive estimate with bisection on the empirical mean.

# %%
import math

from shortfall import (EstimatorConfig, Exponential, GaussianLoss, Identity, RngStream,
                       StepSchedule, closed_form_sr, draw_many, run_sa, saa_binary_search)
from shortfall import bounds as bd
from shortfall.errors import RegimeViolation

p = bd.BoundParams(mu1=1.0, c=0.75, sigma2=1.0, L1=1.0, nu=bd.subgaussian_nu(GaussianLoss(0, 1)),
                   init_err2=0.0)
for n in (10**3, 10**4, 10**5):
    print(f"n={n:>6}  mse bound={bd.thm1_mse(p, n):.3e}  95% bound={bd.thm2_hp(p, n, 0.05):.3f}")

# %%
try:
    bd.thm1_mse(p.replace(c=0.3), 100)
except RegimeViolation as exc:
    print("rejected:", exc)

# %%
model, loss = GaussianLoss(0.3, 0.8), Exponential(1.0)
xi = draw_many(model, RngStream(1, 0), 100_000)
bracket = (-2.0, 3.0)
mu1 = bd.measure_constants(model, loss, 1.0, bracket)["mu1"]
sa = run_sa(xi, EstimatorConfig(loss, 1.0, bracket, StepSchedule(0.75 / mu1))).t
saa = saa_binary_search(xi, loss, 1.0, bracket)
print(f"SA {sa:.5f}   SAA {saa:.5f}   closed form {closed_form_sr(model, loss, 1.0):.5f}")
