"""Bayesian non-parametric non-negative matrix factorization (BN2MF).

Gamma-Poisson matrix factorization with a sparse rank-shrinkage vector, fit by
annealed coordinate-ascent variational inference, plus confidence intervals,
a simulation generator, frequentist baselines and comparison metrics.
"""

__version__ = "0.1.0"

from .errors import ConfigError, FitError, NumericalError, ParseError
from .model import ExposureMatrix, GammaVariational, Hyperparameters, VariationalState
from .vi import FactorizationResult, FitConfig, cavi_sweep, compute_elbo, fit
from .simgen import SimSpec, SimTruth, gen_dataset, gen_dictionary, gen_scores
from .metrics import align, compare_solution, cosine_distance, relative_error, subspace_distance
from .baselines import Method, factor_analysis, nmf_l2, nmf_poisson, pca_retain, select_by_bic
from .uncertainty import ScoreIntervals, bootstrap_ci, coverage, normalize_and_scale, variational_ci

__all__ = [
    "__version__",
    "ConfigError", "FitError", "NumericalError", "ParseError",
    "ExposureMatrix", "GammaVariational", "Hyperparameters", "VariationalState",
    "FactorizationResult", "FitConfig", "cavi_sweep", "compute_elbo", "fit",
    "SimSpec", "SimTruth", "gen_dataset", "gen_dictionary", "gen_scores",
    "align", "compare_solution", "cosine_distance", "relative_error", "subspace_distance",
    "Method", "factor_analysis", "nmf_l2", "nmf_poisson", "pca_retain", "select_by_bic",
    "ScoreIntervals", "bootstrap_ci", "coverage", "normalize_and_scale", "variational_ci",
]
