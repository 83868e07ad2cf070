# %% [markdown]
# Derivative of the shortfall of a two-asset position
#
# X(theta) = theta*Y1 + (1-theta)*Y2. The derivative of t*(theta) is a ratio
# of two expectations evaluated at t*; the estimator plugs in an SA estimate
# t_m and batch means over m coupled draws. Its error shrinks like m^-1/2.

# %%
import math

import numpy as np

from shortfall import (EstimatorConfig, Exponential, RngStream, StepSchedule, TwoAssetPortfolio,
                       closed_form_sr_derivative, estimate_gradient)

port = TwoAssetPortfolio(0.5, 0.0, 1.0, 1.0, theta_domain=(0.0, 1.0))
loss = Exponential(1.0)
est = EstimatorConfig(loss, 1.0, (-1.0, 1.0), StepSchedule(0.75 / math.exp(-1.0625)))
exact = closed_form_sr_derivative(port, loss, 1.0, 0.5)
print("exact derivative at theta = 0.5:", exact)

# %%
for m in (100, 1000, 10_000):
    vals = np.array([estimate_gradient(port, 0.5, m, est, RngStream(3, r)).value for r in range(100)])
    print(f"m={m:>6}  mean={vals.mean(): .4f}  mean |err|={np.abs(vals - exact).mean():.4f}")

# %%
g = estimate_gradient(port, 0.5, 1000, est, RngStream(3, 0))
print(f"one estimate: A_m={g.a_m:.4f} B_m={g.b_m:.4f} t_m={g.t_m:.4f} -> {g.value:.4f}")
