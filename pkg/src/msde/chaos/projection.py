"""Least-squares projection of f(x_r) onto discretized iterated Ito integrals."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import kernels
from ..errors import UsageError
from ..simulate.engine import PathEnsemble
from .semigroup import TerminalFn

ILL_CONDITIONED = 1e12


@dataclass
class ProjectionResult:
    residuals: np.ndarray  # E|xi - Pi^m xi|^2 for m = 0..n
    std_errors: np.ndarray  # standard error of the mean squared residual
    n_regressors: list
    condition: list  # Gram-matrix condition number per order
    bins: int
    M: int

    @property
    def ill_conditioned(self) -> bool:
        return any(c > ILL_CONDITIONED for c in self.condition)

    def residual(self, n: int) -> float:
        return float(self.residuals[n])


def _regressor_specs(n: int, bins: int, d1: int):
    """(order, bins outer->inner nonincreasing, k indices) for every regressor up to order n."""
    specs = []
    for m in range(1, n + 1):
        for bs in itertools.combinations_with_replacement(range(bins - 1, -1, -1), m):
            for ks in itertools.product(range(d1), repeat=m):
                specs.append((m, bs, ks))
    return specs


def project_mc(ens: PathEnsemble, f: TerminalFn, r: float, n: int, bins: Optional[int] = None) -> ProjectionResult:
    """Residual mean squares after regressing xi = f(x_r) on constants and iterated sums of order <= n.

    Time functions are indicators of ``bins`` equal subintervals of [t0, r]; regressors of order m
    are sum over steps i_1 > ... > i_m of prod 1{i_l in bin a_l} dw^{k_l}_{i_l}.
    """
    if not (0 <= n <= 3):
        raise UsageError("project_mc supports orders 0..3")
    B = bins or (8 if n <= 2 else 4)
    S = ens.step_of(r)
    if S < 1:
        raise UsageError("r must lie after the start")
    step_bin = np.minimum((np.arange(S) * B) // S, B - 1)
    masks_by_bin = (step_bin[None, :] == np.arange(B)[:, None]).astype(float)
    specs = _regressor_specs(n, B, ens.d1)
    P = len(specs) + 1

    def per_chunk(ids, paths, dw):
        xi = np.asarray(f(paths[:, S, :]), dtype=float).reshape(-1)
        X = np.empty((xi.size, P))
        X[:, 0] = 1.0
        w = dw[:, :S, :]
        for c, (m, bs, ks) in enumerate(specs, start=1):
            X[:, c] = kernels.iterated_sum(w, masks_by_bin[list(bs)], np.asarray(ks, dtype=np.int64))
        return np.concatenate([X, xi[:, None]], axis=1)

    data = ens.map_paths(per_chunk, with_increments=True)
    X, xi = data[:, :P], data[:, P]
    orders = np.array([0] + [m for m, _, _ in specs])
    res, ses, counts, conds = [], [], [], []
    for m in range(n + 1):
        cols = orders <= m
        Xm = X[:, cols]
        beta, *_ = np.linalg.lstsq(Xm, xi, rcond=None)
        e2 = (xi - Xm @ beta) ** 2
        res.append(float(e2.mean()))
        ses.append(float(e2.std(ddof=1) / math.sqrt(e2.size)) if e2.size > 1 else 0.0)
        counts.append(int(cols.sum()))
        conds.append(float(np.linalg.cond(Xm.T @ Xm)))
    return ProjectionResult(np.array(res), np.array(ses), counts, conds, B, ens.M)
