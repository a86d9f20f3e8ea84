"""Semigroup solves, iterated-integral expansions and range projections for d <= 2."""

from .checks import (GradientBoundReport, SummabilityProfile, gradient_bound_check, numeric_gradient,
                     summability_profile)
from .expansion import ChaosExpansion, LevelData, chaos_coefficients, residual_energy
from .projection import ProjectionResult, project_mc
from .range import RangeProjection, range_projection
from .semigroup import (Grid, QOperatorResult, SemigroupSolution, Stepper, apply_q, q_operator,
                        semigroup_solve, truncation_radius)

__all__ = [
    "ChaosExpansion", "GradientBoundReport", "Grid", "LevelData", "ProjectionResult", "QOperatorResult",
    "RangeProjection", "SemigroupSolution", "Stepper", "SummabilityProfile", "apply_q", "chaos_coefficients",
    "gradient_bound_check", "numeric_gradient", "project_mc", "q_operator", "range_projection",
    "residual_energy", "semigroup_solve", "summability_profile", "truncation_radius",
]
