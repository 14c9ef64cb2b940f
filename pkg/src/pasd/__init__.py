"""Subgroup discovery for differential model performance.

Trees that split on heterogeneity in a performance measure (squared error,
absolute error, Brier score or AUC), their forest and boosting ensembles,
and two ways of combining fixed prediction models with those ensembles.
"""

from .data import Dataset
from .errors import PasdError
from .measures import Measure, SubgroupStats, subgroup_stats
from .tree import Criterion, GrowthConfig, Heterogeneity, Tree, grow_tree, honest_estimate, predict
from .pruning import (
    SelectionConfig,
    SelectionRule,
    fit_cv,
    select_final_cv_error,
    select_final_cv_split_complexity,
)
from .ensembles import BoostedModel, Forest, fit_boosting, fit_forest
from .combination import (
    EMCombiner,
    VoteCombiner,
    combiner_from_dict,
    em_fit,
    em_fit_analytic,
    fit_em_combiner,
    fit_vote_combiner,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "PasdError",
    "Measure",
    "SubgroupStats",
    "subgroup_stats",
    "Criterion",
    "GrowthConfig",
    "Heterogeneity",
    "Tree",
    "grow_tree",
    "honest_estimate",
    "predict",
    "SelectionConfig",
    "SelectionRule",
    "fit_cv",
    "select_final_cv_error",
    "select_final_cv_split_complexity",
    "BoostedModel",
    "Forest",
    "fit_boosting",
    "fit_forest",
    "EMCombiner",
    "VoteCombiner",
    "combiner_from_dict",
    "em_fit",
    "em_fit_analytic",
    "fit_em_combiner",
    "fit_vote_combiner",
]
