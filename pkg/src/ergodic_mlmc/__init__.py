"""Invariant-measure estimation for ergodic SDEs by multilevel Monte
Carlo, with a change-of-measure coupling for drifts that are not
contractive.

Three interchangeable estimators share one configuration: plain Monte
Carlo ("mc"), multilevel with the usual shared-noise coupling
("mlmc_standard"), and multilevel with spring-coupled pairs reweighted
by their exact path likelihood ratios ("mlmc_com"). A diagnostics layer
measures per-level variance and kurtosis, divergence probabilities,
variance growth in the horizon, convergence rates and cost scaling.
"""

from .errors import (AdaptivityFailureError, ConfigError, ErgodicMlmcError,
                     InvalidDataError, NumericOverflowError)
from .models import (ModelSpec, SpringPolicy, adaptive_timestep,
                     available_models, eval_drift, eval_observable, get_model,
                     register_model, saturate, spring_coefficient,
                     validate_spring_policy, with_observable)
from .sampling import (DEFAULT_MASTER_SEED, IncrementStream, StreamKey,
                       coarse_increment, gaussian_increment, make_stream)
from .coupling import (BatchPaths, CoupledPathState, PathResult,
                       coupled_pair_step, em_step, initial_state,
                       round_up_horizon, simulate_adaptive_coupled_path,
                       simulate_coupled_path, simulate_single_adaptive_path,
                       simulate_single_path, simulate_standard_coupled_path,
                       step_log_weight)
from .estimators import (LevelStats, MlmcConfig, MlmcReport, allocate_samples,
                         choose_horizon, choose_max_level, estimate,
                         level_sample, mc_estimate, mlmc_estimate)
from .diagnostics import (H0SearchResult, SeriesFit, cost_exponent,
                          cost_vs_epsilon, divergence_probability, find_h0,
                          fit_lambda_star, fit_rate, level_sweep,
                          variance_vs_horizon)

__version__ = "0.1.0"

__all__ = [
    "AdaptivityFailureError", "ConfigError", "ErgodicMlmcError",
    "InvalidDataError", "NumericOverflowError",
    "ModelSpec", "SpringPolicy", "adaptive_timestep", "available_models",
    "eval_drift", "eval_observable", "get_model", "register_model",
    "saturate", "spring_coefficient", "validate_spring_policy",
    "with_observable",
    "DEFAULT_MASTER_SEED", "IncrementStream", "StreamKey",
    "coarse_increment", "gaussian_increment", "make_stream",
    "BatchPaths", "CoupledPathState", "PathResult", "coupled_pair_step",
    "em_step", "initial_state", "round_up_horizon",
    "simulate_adaptive_coupled_path", "simulate_coupled_path",
    "simulate_single_adaptive_path", "simulate_single_path",
    "simulate_standard_coupled_path", "step_log_weight",
    "LevelStats", "MlmcConfig", "MlmcReport", "allocate_samples",
    "choose_horizon", "choose_max_level", "estimate", "level_sample",
    "mc_estimate", "mlmc_estimate",
    "H0SearchResult", "SeriesFit", "cost_exponent", "cost_vs_epsilon",
    "divergence_probability", "find_h0", "fit_lambda_star", "fit_rate",
    "level_sweep", "variance_vs_horizon",
]
