"""Monte Carlo path functionals with standard errors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

from .. import kernels
from ..errors import UsageError
from .engine import PathEnsemble

ScalarFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class FunctionalEstimate:
    value: float
    std_error: float
    m: int
    M_used: int
    extras: dict = dc_field(default_factory=dict)

    @property
    def ci95(self) -> tuple:
        return (self.value - 1.96 * self.std_error, self.value + 1.96 * self.std_error)

    def row(self, claim: str, rhs_bound: Optional[float]) -> dict:
        """Report row; ``pass`` means lhs <= rhs + 3 std errors."""
        ok = None if rhs_bound is None else bool(self.value <= rhs_bound + 3.0 * self.std_error)
        return {"claim": claim, "lhs": self.value, "rhs_bound": rhs_bound, "std_error": self.std_error,
                "pass": ok}


def mc_estimate(samples: np.ndarray, m: int = 1, **extras) -> FunctionalEstimate:
    s = np.asarray(samples, dtype=float)
    n = s.size
    mean = float(np.mean(s))
    se = float(np.std(s, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return FunctionalEstimate(mean, se, m, n, dict(extras))


def _path_integral(f: ScalarFn, times: np.ndarray, paths: np.ndarray, upto: Optional[np.ndarray] = None):
    """Trapezoid integral of f(t_k, x_k) along each path, optionally stopped at index ``upto``."""
    n, S1, d = paths.shape
    tt = np.broadcast_to(times[None, :], (n, S1)).reshape(-1)
    vals = np.asarray(f(tt, paths.reshape(-1, d)), dtype=float).reshape(n, S1)
    dt = times[1] - times[0] if S1 > 1 else 0.0
    if upto is None:
        return dt * (vals.sum(axis=1) - 0.5 * (vals[:, 0] + vals[:, -1]))
    idx = np.arange(S1)[None, :]
    w = np.where(idx < upto[:, None], 1.0, 0.0) + np.where(idx == upto[:, None], 0.5, 0.0)
    w[:, 0] = np.where(upto > 0, 0.5, 0.0)
    return dt * np.sum(w * vals, axis=1)


def lpq_norm(f: ScalarFn, p: float, q: float, t_range: Sequence[float], box_center, box_halfwidth: float,
             nx: int = 128, nt: int = 64) -> float:
    """(integral over t of (integral over x of |f|^p)^(q/p))^(1/q) by the midpoint rule on a box."""
    c = np.asarray(box_center, dtype=float)
    d = c.size
    h = 2.0 * box_halfwidth / nx
    axis = -box_halfwidth + (np.arange(nx) + 0.5) * h
    pts = c + np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    t0, t1 = t_range
    ht = (t1 - t0) / nt
    total = 0.0
    for tm in t0 + (np.arange(nt) + 0.5) * ht:
        v = np.abs(np.asarray(f(np.full(pts.shape[0], tm), pts), dtype=float))
        total += (np.sum(v**p) * h**d) ** (q / p) * ht
    return total ** (1.0 / q)


def occupation_functional(ens: PathEnsemble, f: ScalarFn, m: int = 1,
                          lpq: Optional[dict] = None) -> FunctionalEstimate:
    """E (integral_0^T f(t0+s, x_s) ds)^m; ``lpq`` holds keyword arguments for :func:`lpq_norm`."""
    if m < 1:
        raise UsageError("moment order must be >= 1")
    times = ens.times
    J = ens.map_paths(lambda ids, p: _path_integral(f, times, p))
    extras = {}
    if lpq is not None:
        extras["lpq_norm"] = lpq_norm(f, **lpq)
    return mc_estimate(J**m, m, **extras)


def exit_time_functional(ens: PathEnsemble, t: float, x, rho: float,
                         g: Optional[ScalarFn] = None) -> FunctionalEstimate:
    """E of the integral of g up to the grid exit time from [t, t + rho^2) x B_rho(x); g = 1 gives E tau."""
    x = np.asarray(x, dtype=float)
    if not (t <= ens.t0 < t + rho**2) or np.linalg.norm(ens.x0 - x) >= rho:
        raise UsageError("the cylinder must contain the starting point")
    remaining = t + rho**2 - ens.t0
    cap = int(math.floor(remaining / ens.dt + 1e-9))
    if cap > ens.steps:
        raise UsageError("ensemble horizon shorter than the cylinder's time side")
    times = ens.times

    def per_chunk(ids, paths):
        k = kernels.first_exit(paths, x, float(rho), cap)
        if g is None:
            return k * ens.dt
        return _path_integral(g, times, paths, upto=k)

    vals = ens.map_paths(per_chunk)
    return mc_estimate(vals, 1, cap_time=cap * ens.dt)


@dataclass
class ModulusResult:
    windows: np.ndarray  # window lengths in time units
    estimates: np.ndarray
    std_errors: np.ndarray
    slope: float
    intercept: float
    moment: float


def modulus_statistics(ens: PathEnsemble, n: float, windows: Sequence[int]) -> ModulusResult:
    """E sup_{0 < u - s <= h} |x_u - x_s|^n over disjoint windows of ``windows`` steps; log-log slope fit."""
    w = [int(v) for v in windows]
    if any(v < 1 or v > ens.steps for v in w):
        raise UsageError("windows must lie within the horizon")

    def per_chunk(ids, paths):
        return np.stack([kernels.window_sup_moment(paths, v, float(n)) for v in w], axis=1)

    vals = ens.map_paths(per_chunk)
    est = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(vals.shape[0]) if vals.shape[0] > 1 else np.zeros(len(w))
    h = np.asarray(w, dtype=float) * ens.dt
    use = h <= 1.0
    if use.sum() < 2:
        raise UsageError("need at least two windows of length <= 1")
    slope, intercept = np.polyfit(np.log(h[use]), np.log(est[use]), 1)
    return ModulusResult(h, est, se, float(slope), float(intercept), float(n))
