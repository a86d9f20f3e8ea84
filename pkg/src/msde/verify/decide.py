"""Statistical decision rules applied to estimator outputs."""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import isotonic_regression

from ..errors import UsageError

SE_MULTIPLIER = 3.0


def one_sided(lhs: float, rhs: float, std_error: float) -> bool:
    return bool(lhs <= rhs + SE_MULTIPLIER * std_error)


def two_sided(lhs: float, rhs: float, std_error: float, tolerance: float) -> bool:
    return bool(abs(lhs - rhs) <= tolerance + SE_MULTIPLIER * std_error)


def isotonic_residual(values: Sequence[float], increasing: bool = False) -> float:
    """Largest deviation of the series from its best monotone (least-squares) fit."""
    y = np.asarray(values, dtype=float)
    if y.size < 2:
        return 0.0
    fit = isotonic_regression(y, increasing=increasing).x
    return float(np.max(np.abs(y - fit)))


def trend(values: Sequence[float], std_errors: Sequence[float], tolerance: float,
          increasing: bool = False) -> tuple:
    """(residual, pass): monotone within tolerance plus 3 of the largest standard errors."""
    res = isotonic_residual(values, increasing)
    se = float(np.max(std_errors)) if len(std_errors) else 0.0
    return res, bool(res <= tolerance + SE_MULTIPLIER * se)


def implied_constant(lhs: float, rhs_unit: Optional[float]) -> Optional[float]:
    """Smallest C with lhs <= C * rhs_unit."""
    if rhs_unit is None:
        return None
    if rhs_unit < 0:
        raise UsageError("bound quantity must be nonnegative")
    if rhs_unit == 0:
        return 0.0 if lhs <= 0 else math.inf
    return max(0.0, lhs / rhs_unit)
