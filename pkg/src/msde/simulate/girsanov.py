"""Exponential-martingale reweighting of ensembles by the bounded drift part."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import FieldDefectError, UsageError
from ..spaces import DriftSplit
from .engine import PathEnsemble
from .functionals import FunctionalEstimate, mc_estimate


@dataclass
class GirsanovWeights:
    n_threshold: float
    weight: np.ndarray  # exp(psi_T) per path
    sup_dev: np.ndarray  # sup_s |exp(psi_s) - 1| per path
    sign: int
    psi: Optional[np.ndarray] = None  # (M, steps+1) when requested


def _pinv_sigma(sig: np.ndarray) -> np.ndarray:
    """sigma^T (sigma sigma^T)^{-1}, batched."""
    a = sig @ np.swapaxes(sig, 1, 2)
    try:
        inv = np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise FieldDefectError("sigma sigma^T is singular along a path") from exc
    if not np.all(np.isfinite(inv)):
        raise FieldDefectError("sigma inversion produced non-finite values")
    return np.swapaxes(sig, 1, 2) @ inv


def _psi_chunk(ens: PathEnsemble, split: DriftSplit, n_threshold: float, sign: int, paths, dw,
               keep_psi: bool):
    field = split.b_B
    sfield = ens.field if ens.field is not None else field
    n, S1, d = paths.shape
    psi = np.zeros(n)
    sup = np.zeros(n)
    trace = np.zeros((n, S1)) if keep_psi else None
    for k in range(S1 - 1):
        t = ens.t0 + k * ens.dt
        x = paths[:, k, :]
        bB = field.drift(t, x, on_singular="zero")
        mag = np.sqrt(np.sum(bB * bB, axis=1))
        active = mag > n_threshold
        if active.any():
            sig = sfield.sigma(t, x[active])
            gam = np.einsum("nij,nj->ni", _pinv_sigma(sig), bB[active])
            psi[active] += sign * np.einsum("ni,ni->n", gam, dw[active, k, :]) \
                - 0.5 * np.sum(gam * gam, axis=1) * ens.dt
        np.maximum(sup, np.abs(np.expm1(psi)), out=sup)
        if keep_psi:
            trace[:, k + 1] = psi
    return psi, sup, trace


def girsanov_weights(ens: PathEnsemble, split: DriftSplit, n_threshold: float = 0.0, sign: int = 1,
                     keep_psi: bool = False) -> GirsanovWeights:
    """psi_s = sign * int gamma dw - (1/2) int |gamma|^2 ds, gamma = 1{|b_B| > n} sigma^+ b_B.

    sign = +1 turns an ensemble simulated with b_M alone into one with the full drift;
    sign = -1 removes the large part of b_B from a full-drift ensemble.
    """
    if sign not in (1, -1):
        raise UsageError("sign must be +1 or -1")
    if split.b_B is None:
        raise UsageError("split carries no bounded part")

    def per_chunk(ids, paths, dw):
        psi, sup, trace = _psi_chunk(ens, split, n_threshold, sign, paths, dw, keep_psi)
        cols = [np.exp(psi)[:, None], sup[:, None]]
        if keep_psi:
            cols.append(trace)
        return np.concatenate(cols, axis=1)

    out = ens.map_paths(per_chunk, with_increments=True)
    return GirsanovWeights(n_threshold, out[:, 0], out[:, 1], sign, out[:, 2:] if keep_psi else None)


@dataclass
class ConvergenceRow:
    n_threshold: float
    estimate: FunctionalEstimate
    rhs_bound: float


@dataclass
class ConvergenceReport:
    rows: list
    monotone: bool

    def to_json(self) -> list:
        return [
            {"claim": f"sup-weight-deviation(n={r.n_threshold:g})", "lhs": r.estimate.value,
             "rhs_bound": r.rhs_bound, "std_error": r.estimate.std_error,
             "pass": bool(r.estimate.value <= r.rhs_bound + 3 * r.estimate.std_error)}
            for r in self.rows
        ]


def weight_convergence_check(ens: PathEnsemble, split: DriftSplit, thresholds: Sequence[float],
                             N_const: float = 1.0, sign: int = -1) -> ConvergenceReport:
    """E sup_s |exp psi_{n,s} - 1| for increasing n, with the bound
    N (int b_tilde^2 1{b_tilde > n})^(1/2) exp(N int b_tilde^2)."""
    ns = [float(v) for v in thresholds]
    if any(b < a for a, b in zip(ns, ns[1:])):
        raise UsageError("thresholds must be nondecreasing")
    total = split.cumulative()[-1]
    rows = []
    for n in ns:
        gw = girsanov_weights(ens, split, n, sign)
        est = mc_estimate(gw.sup_dev)
        rhs = N_const * math.sqrt(split.tail_integral(n)) * math.exp(N_const * total)
        rows.append(ConvergenceRow(n, est, rhs))
    mono = all(
        b.estimate.value <= a.estimate.value + 3.0 * math.hypot(a.estimate.std_error, b.estimate.std_error)
        for a, b in zip(rows, rows[1:])
    )
    return ConvergenceReport(rows, mono)
