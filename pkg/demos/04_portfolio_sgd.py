# %% [markdown]
# Minimizing shortfall over the portfolio weight
#
# The shortfall of the Gaussian portfolio is quadratic in theta with
# curvature mu2 = beta(s1^2 + s2^2) and minimum at theta* = 0.75. SGD with
# a_k = c/k and c = 0.75/mu2 uses the biased derivative estimates above.

# %%
import math

import numpy as np

from shortfall import (EstimatorConfig, Exponential, Fixed, Horizon, OptimizerConfig, RngStream,
                       StepSchedule, TwoAssetPortfolio, closed_form_sr, optimize,
                       portfolio_argmin, portfolio_mu2)

port = TwoAssetPortfolio(0.5, 0.0, 1.0, 1.0, theta_domain=(0.0, 1.0))
loss = Exponential(1.0)
est = EstimatorConfig(loss, 1.0, (-1.0, 1.0), StepSchedule(0.75 / math.exp(-1.0625)))
mu2, theta_star = portfolio_mu2(port, loss), portfolio_argmin(port, loss)
print(f"mu2 = {mu2}, theta* = {theta_star}")

# %%
# a growing batch keeps the bias in step with the horizon
for n in (100, 316, 1000):
    cfg = OptimizerConfig(port.theta_domain, StepSchedule(0.75 / mu2), Horizon(1.0), n, est)
    finals = np.array([optimize(port, cfg, RngStream(5, r)).final_theta for r in range(50)])
    gap = np.mean([closed_form_sr(port, loss, 1.0, th) for th in finals]) - closed_form_sr(port, loss, 1.0, theta_star)
    print(f"m = n = {n:>5}: mse={np.mean((finals - theta_star) ** 2):.2e}  shortfall gap={gap:.2e}")

# %%
# with a fixed small batch the error stalls at a bias floor
for n in (1000, 10_000):
    cfg = OptimizerConfig(port.theta_domain, StepSchedule(0.75 / mu2), Fixed(64), n, est)
    finals = np.array([optimize(port, cfg, RngStream(6, r)).final_theta for r in range(50)])
    print(f"m = 64, n = {n:>6}: mse={np.mean((finals - theta_star) ** 2):.2e}")

# %%
rec = optimize(port, OptimizerConfig(port.theta_domain, StepSchedule(0.75 / mu2), Fixed(256), 2000, est),
               RngStream(7, 0))
for k, th, g, m in rec.trajectory[::6]:
    print(f"k={k:>5} theta={th:.4f} grad={g: .4f}")
