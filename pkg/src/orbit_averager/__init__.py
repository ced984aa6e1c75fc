"""Closed-form first-order averaging for perturbed linear systems on
``(S^2)^m x R^n`` and numerical verification of the predicted limit cycles."""

from .averaging import AveragedMap, RootResult, averaged_map, jacobian_det, numeric_averaged, solve_root
from .integrand import ExpTrigTerm, TermSum, definite_integral
from .manifold import ChartPoint, ChartRegion, ManifoldSpec, chart_distance, in_region, normalize
from .numerics import IntegratorConfig, Trajectory, integrate
from .systems import (
    SCENARIOS,
    AffinePerturbation,
    Scenario,
    flow,
    fundamental_matrix,
    get_scenario,
    monodromy_defect,
    perturbed_field,
)
from .verifier import CycleCertificate, SectionSpec, SweepResult, epsilon_sweep, find_fixed_point, return_map

__all__ = [
    "AffinePerturbation",
    "AveragedMap",
    "ChartPoint",
    "ChartRegion",
    "CycleCertificate",
    "ExpTrigTerm",
    "IntegratorConfig",
    "ManifoldSpec",
    "RootResult",
    "SCENARIOS",
    "Scenario",
    "SectionSpec",
    "SweepResult",
    "TermSum",
    "Trajectory",
    "averaged_map",
    "chart_distance",
    "definite_integral",
    "epsilon_sweep",
    "find_fixed_point",
    "flow",
    "fundamental_matrix",
    "get_scenario",
    "in_region",
    "integrate",
    "jacobian_det",
    "monodromy_defect",
    "normalize",
    "numeric_averaged",
    "perturbed_field",
    "return_map",
    "solve_root",
]
