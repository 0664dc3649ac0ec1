"""Conformal prediction sets for grouped (random-effects) data.

The package covers full and split conformal building blocks, Gaussian and
logistic working models, the grouped-data prediction-set methods, a 2-D
kernel density estimator for level-set regions, and a seeded simulation
harness.
"""

from .conformal import (binary_conformal_pvalues, binary_conformal_set,
                        conformal_interval_mean, conformal_pvalue_mean,
                        full_coverage_guaranteed, invert_unimodal,
                        mean_pvalue_function, split_conformal_threshold)
from .intervals import IntervalSet, LabelSet
from .kde2d import Kde2d, MassLevel, density_at, mass_level, region_theta_scan, select_bandwidth
from .methods import (GroupedSample, CdfBand, cdf_band, fit_cdf_band, naive_sup,
                      naive_unsup, randomset_kde_unsup, randomset_mean_unsup,
                      randomset_sup, subsample_sup, subsample_unsup,
                      within_group_conformal)
from .simlab import (ExperimentSummary, MethodSpec, SupDesign, TrialResult,
                     UnsupDesign, gen_sup, gen_unsup, pathological_design,
                     run_experiment, shrinkage_experiment)
from .working_models import (ConvergenceError, GaussianModel, LevelSetPair,
                             LogisticFitter, LogisticModel, SeparationError, TPrior,
                             fit_gaussian_mean, fit_logistic_map,
                             gaussian_level_interval, james_stein,
                             level_set_threshold, split_level_set)

__version__ = "0.1.0"

__all__ = [
    "binary_conformal_pvalues", "binary_conformal_set", "cdf_band", "CdfBand",
    "conformal_interval_mean", "conformal_pvalue_mean", "ConvergenceError",
    "density_at", "ExperimentSummary", "fit_cdf_band", "fit_gaussian_mean",
    "fit_logistic_map", "full_coverage_guaranteed", "gaussian_level_interval",
    "GaussianModel", "gen_sup", "gen_unsup", "GroupedSample", "IntervalSet",
    "invert_unimodal", "james_stein", "Kde2d", "LabelSet", "level_set_threshold",
    "LevelSetPair", "LogisticFitter", "LogisticModel", "mass_level", "MassLevel",
    "mean_pvalue_function", "MethodSpec", "naive_sup", "naive_unsup",
    "pathological_design", "randomset_kde_unsup", "randomset_mean_unsup",
    "randomset_sup", "region_theta_scan", "run_experiment", "select_bandwidth",
    "SeparationError", "shrinkage_experiment", "split_conformal_threshold",
    "split_level_set", "subsample_sup", "subsample_unsup", "SupDesign", "TPrior",
    "TrialResult", "UnsupDesign", "within_group_conformal",
]
