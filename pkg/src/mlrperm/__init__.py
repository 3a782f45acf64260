"""Permutation inference for the treatment coefficient in ``y ~ x1 + x2``."""

__version__ = "0.1.0"

from .cluster import (  # noqa: E402
    ClusterStructure,
    Scenario,
    cluster_null_distribution,
    enumerate_assignments,
    permutation_space_size,
    structure_for,
)
from .core_lm import Dataset, FitResult, fit_full, fit_reduced, t_statistic  # noqa: E402
from .inference import TestResult, ols_p_value, permutation_p_value, proportion_ci, t_cdf  # noqa: E402
from .schemes import NullDistribution, Permutation, Scheme, null_distribution  # noqa: E402

__all__ = [
    "ClusterStructure",
    "Dataset",
    "FitResult",
    "NullDistribution",
    "Permutation",
    "Scenario",
    "Scheme",
    "TestResult",
    "cluster_null_distribution",
    "enumerate_assignments",
    "fit_full",
    "fit_reduced",
    "null_distribution",
    "ols_p_value",
    "permutation_p_value",
    "permutation_space_size",
    "proportion_ci",
    "structure_for",
    "t_cdf",
    "t_statistic",
]
