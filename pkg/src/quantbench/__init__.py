"""Prevalence estimation under label shift: quantifiers, sampling protocol and rank statistics."""

from .classifier import ClassifierConfig, FittedScores, cross_val_scores, fit_logistic
from .core import PrevalenceEstimate, QuantificationError, project_to_simplex
from .dataset import Column, DataError, Dataset, apply_preprocess, fit_preprocess, load_csv, synth_gaussian
from .metrics import ae, friedman_test, nemenyi_cd, nkld, rank_methods, rank_report
from .quantify import METHODS, Context, QuantifierSpec, quantify
from .runner import RunConfig, aggregate, config_from_dict, load_config, run
from .sampling import ScenarioSpec, binary_grid, draw_split, multiclass_grid, shift_category

__all__ = [
    "ClassifierConfig", "FittedScores", "cross_val_scores", "fit_logistic",
    "PrevalenceEstimate", "QuantificationError", "project_to_simplex",
    "Column", "DataError", "Dataset", "apply_preprocess", "fit_preprocess", "load_csv", "synth_gaussian",
    "ae", "friedman_test", "nemenyi_cd", "nkld", "rank_methods", "rank_report",
    "METHODS", "Context", "QuantifierSpec", "quantify",
    "RunConfig", "aggregate", "config_from_dict", "load_config", "run",
    "ScenarioSpec", "binary_grid", "draw_split", "multiclass_grid", "shift_category",
]
__version__ = "0.1.0"
