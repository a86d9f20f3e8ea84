"""Two-sample comparison of finite-dimensional distributions of two ensembles."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import UsageError
from .engine import PathEnsemble

TestFunction = Callable[[np.ndarray], np.ndarray]  # (M, len(times), d) -> (M,)


def ks_distance(a: np.ndarray, b: np.ndarray) -> float:
    """sup_x |F_a(x) - F_b(x)| for two samples."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


@functools.lru_cache(maxsize=32)
def calibrate_threshold(MA: int, MB: int, K: int = 1, alpha: float = 0.01, reps: int = 1000,
                        seed: int = 0) -> float:
    """Empirical (1 - alpha) quantile of the maximum of K two-sample distances under a common law.

    The statistic is distribution-free for continuous laws, so uniform samples stand in for
    the ensembles. Treating the K distances as independent makes the threshold conservative.
    """
    if K < 1 or reps < 10 or not (0 < alpha < 1):
        raise UsageError("need K >= 1, reps >= 10 and alpha in (0, 1)")
    rng = np.random.default_rng([seed, MA, MB, K])
    stats = np.empty(reps)
    for r in range(reps):
        stats[r] = max(ks_distance(rng.random(MA), rng.random(MB)) for _ in range(K))
    return float(np.quantile(stats, 1.0 - alpha))


def _default_tests(n_times: int, d: int):
    tests = []
    for i in range(n_times):
        for j in range(d):
            tests.append((f"x[{i}][{j}]", (lambda i, j: lambda s: s[:, i, j])(i, j)))
    tests.append(("|x[-1]|", lambda s: np.linalg.norm(s[:, -1, :], axis=1)))
    return tests


@dataclass
class FddComparison:
    names: list
    distances: np.ndarray
    threshold: float
    M_A: int
    M_B: int

    @property
    def passed(self) -> bool:
        return bool(np.all(self.distances < self.threshold))

    def to_json(self) -> list:
        return [{"claim": f"ks({n})", "lhs": float(v), "rhs_bound": self.threshold, "std_error": 0.0,
                 "pass": bool(v < self.threshold)} for n, v in zip(self.names, self.distances)]


def fdd_compare(ensA: PathEnsemble, ensB: PathEnsemble, times: Sequence[float],
                test_functions: Optional[Sequence[tuple]] = None, threshold: Optional[float] = None,
                alpha: float = 0.01, reps: int = 1000) -> FddComparison:
    """Kolmogorov-Smirnov distances between the two ensembles at the given times.

    ``test_functions`` are (name, fn) pairs with fn mapping (M, len(times), d) snapshots to (M,).
    Without ``threshold`` it is calibrated for the ensemble sizes and number of tests.
    """
    if ensA.d != ensB.d:
        raise UsageError("ensembles live in different dimensions")
    if not (math.isclose(ensA.t0, ensB.t0) and math.isclose(ensA.T, ensB.T)
            and np.array_equal(ensA.x0, ensB.x0)):
        raise UsageError("ensembles must share the start point and horizon")
    ts = [float(t) for t in times]
    snapA = ensA.snapshots([ensA.step_of(t) for t in ts])
    snapB = ensB.snapshots([ensB.step_of(t) for t in ts])
    tests = list(test_functions) if test_functions is not None else _default_tests(len(ts), ensA.d)
    names = [n for n, _ in tests]
    dist = np.array([ks_distance(fn(snapA), fn(snapB)) for _, fn in tests])
    if threshold is None:
        threshold = calibrate_threshold(ensA.M, ensB.M, len(tests), alpha, reps)
    return FddComparison(names, dist, float(threshold), ensA.M, ensB.M)
