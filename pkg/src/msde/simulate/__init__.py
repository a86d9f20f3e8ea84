"""Path simulation and Monte Carlo path functionals."""

from .density import (DensityEstimate, TimeIntegratedNorm, density_estimate, gaussian_lp_norm,
                      kde_on_grid, silverman_bandwidth, singular_exponent, time_integrated_norm)
from .engine import (PathEnsemble, default_drift_cap, euler_maruyama, load_ensemble, save_ensemble,
                     simulate_paths)
from .fdd import FddComparison, calibrate_threshold, fdd_compare, ks_distance
from .flow import derivative_flow
from .functionals import (FunctionalEstimate, ModulusResult, exit_time_functional, lpq_norm, mc_estimate,
                          modulus_statistics, occupation_functional)
from .girsanov import (ConvergenceReport, ConvergenceRow, GirsanovWeights, girsanov_weights,
                       weight_convergence_check)

__all__ = [
    "ConvergenceReport", "ConvergenceRow", "DensityEstimate", "FddComparison", "FunctionalEstimate",
    "GirsanovWeights", "ModulusResult", "PathEnsemble", "TimeIntegratedNorm", "calibrate_threshold",
    "default_drift_cap", "density_estimate", "derivative_flow", "euler_maruyama", "exit_time_functional",
    "fdd_compare", "gaussian_lp_norm", "girsanov_weights", "kde_on_grid", "ks_distance", "load_ensemble",
    "lpq_norm", "mc_estimate", "modulus_statistics", "occupation_functional", "save_ensemble",
    "silverman_bandwidth", "simulate_paths", "singular_exponent", "time_integrated_norm",
    "weight_convergence_check",
]
