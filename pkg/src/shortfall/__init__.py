"""Online estimation and minimization of utility-based shortfall risk."""
from .errors import *  # noqa: F401,F403
from .losses import Exponential, Identity, LossConstants, LossSpec, PiecewisePolynomial, loss_from_dict
from .models import (GaussianLoss, RngStream, TruncatedGaussianLoss, TwoAssetPortfolio,
                     closed_form_sr, closed_form_sr_derivative, draw, draw_many,
                     draw_with_sensitivity, model_from_dict, pair_draws, portfolio_argmin,
                     portfolio_mu2)
from .estimator import (EstimatorConfig, EstimatorState, StepSchedule, Trajectory,
                        bracket_search, estimate, g_hat, project, run_sa, sa_step,
                        saa_binary_search, step_size)
from .gradient import GradientEstimate, estimate_gradient
from .optimizer import Fixed, Horizon, OptimizerConfig, OptRunRecord, batch_size, optimize, sgd_step
from .bounds import (BoundParams, cor1_mse, measure_constants, thm1_mse, thm2_hp, thm3_mse,
                     thm4_hp, thm5_mse)
from .experiments import ExperimentConfig, RateFit, compare_bounds, fit_rate, run

__version__ = "0.1.0"
