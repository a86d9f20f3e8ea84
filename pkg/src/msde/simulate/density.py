"""Kernel density estimates of the marginal law of x_t and their L_p norms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

from ..errors import UsageError
from .engine import PathEnsemble

GRID_SPAN_SD = 6.0


@dataclass
class DensityEstimate:
    axes: list  # per-axis cell centers
    density: np.ndarray  # shape (n,)*d
    bandwidth: np.ndarray
    lp_norm: float
    p_prime: float
    finite: bool

    @property
    def cell_volume(self) -> float:
        return float(np.prod([a[1] - a[0] for a in self.axes]))

    def l1_distance(self, exact) -> float:
        """L1 distance to ``exact(points) -> values`` on the estimate's grid."""
        pts = np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1).reshape(-1, len(self.axes))
        ref = np.asarray(exact(pts), dtype=float).reshape(self.density.shape)
        return float(np.sum(np.abs(self.density - ref)) * self.cell_volume)


def silverman_bandwidth(x: np.ndarray) -> np.ndarray:
    n, d = x.shape
    sd = x.std(axis=0, ddof=1)
    return sd * (4.0 / ((d + 2.0) * n)) ** (1.0 / (d + 4.0))


def kde_on_grid(x: np.ndarray, bandwidth: Optional[Sequence[float]] = None, grid_points: int = 128,
                p_prime: float = 2.0) -> DensityEstimate:
    """Gaussian product-kernel density on a regular grid via linear binning and FFT convolution."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, d = x.shape
    h = silverman_bandwidth(x) if bandwidth is None else np.broadcast_to(np.asarray(bandwidth, float), (d,))
    if np.any(~np.isfinite(h)) or np.any(h <= 0):
        raise UsageError("degenerate bandwidth; pass one explicitly")
    mu = x.mean(axis=0)
    sd = np.maximum(x.std(axis=0), h)
    lo = mu - GRID_SPAN_SD * sd - 4 * h
    hi = mu + GRID_SPAN_SD * sd + 4 * h
    # keep every sample inside the grid
    lo = np.minimum(lo, x.min(axis=0) - 4 * h)
    hi = np.maximum(hi, x.max(axis=0) + 4 * h)
    G = grid_points
    step = (hi - lo) / (G - 1)
    axes = [lo[j] + step[j] * np.arange(G) for j in range(d)]
    counts = np.zeros((G,) * d)
    pos = (x - lo) / step
    i0 = np.clip(np.floor(pos).astype(np.int64), 0, G - 2)
    fr = pos - i0
    for corner in range(1 << d):
        w = np.ones(n)
        idx = []
        for j in range(d):
            bit = (corner >> j) & 1
            w = w * (fr[:, j] if bit else 1.0 - fr[:, j])
            idx.append(i0[:, j] + bit)
        np.add.at(counts, tuple(idx), w)
    kern = np.ones((1,) * d)
    for j in range(d):
        half = int(math.ceil(4 * h[j] / step[j]))
        u = np.arange(-half, half + 1) * step[j]
        kj = np.exp(-0.5 * (u / h[j]) ** 2)
        kj /= kj.sum() * step[j]
        shape = [1] * d
        shape[j] = kj.size
        kern = kern * kj.reshape(shape)
    dens = fftconvolve(counts, kern, mode="same") / n
    dens = np.maximum(dens, 0.0)
    vol = float(np.prod(step))
    norm = float((np.sum(dens**p_prime) * vol) ** (1.0 / p_prime))
    return DensityEstimate(axes, dens, np.asarray(h), norm, p_prime, bool(np.isfinite(norm)))


def density_estimate(ens: PathEnsemble, t: float, bandwidth=None, p_prime: float = 2.0,
                     grid_points: int = 128) -> DensityEstimate:
    return kde_on_grid(ens.terminal(ens.step_of(t)), bandwidth, grid_points, p_prime)


@dataclass
class TimeIntegratedNorm:
    value: float
    times: np.ndarray
    norms: np.ndarray
    beta: float


def singular_exponent(d: int, p_prime: float, q_prime: float) -> float:
    """Blow-up rate of ||p_t||_{L_p'}^{q'} at t -> 0 for a nondegenerate diffusion."""
    return 0.5 * d * (1.0 - 1.0 / p_prime) * q_prime


def time_integrated_norm(ens: PathEnsemble, times: Sequence[float], p_prime: float, q_prime: float,
                         grid_points: int = 128) -> TimeIntegratedNorm:
    """Integral over [t0, T] of ||p_t||^{q'} with the t^(-beta) factor integrated exactly.

    Between nodes, ||p_t||^{q'} (t - t0)^beta is interpolated linearly and constant before the first node.
    """
    ts = np.sort(np.asarray(times, dtype=float))
    if ts[0] <= ens.t0:
        raise UsageError("density times must be after the start")
    beta = singular_exponent(ens.d, p_prime, q_prime)
    if beta >= 1:
        raise UsageError("time integral diverges for these exponents")
    snaps = ens.snapshots([ens.step_of(t) for t in ts])
    norms = np.array([kde_on_grid(snaps[:, i, :], None, grid_points, p_prime).lp_norm for i in range(ts.size)])
    s = ts - ens.t0
    g = norms**q_prime * s**beta

    def mom(a, b, k):
        # integral of u^(k - beta) over [a, b]
        e = k + 1.0 - beta
        return (b**e - a**e) / e

    total = g[0] * mom(0.0, s[0], 0)
    for i in range(len(s) - 1):
        a, b = s[i], s[i + 1]
        slope = (g[i + 1] - g[i]) / (b - a)
        total += (g[i] - slope * a) * mom(a, b, 0) + slope * mom(a, b, 1)
    T_end = ens.T
    if T_end > s[-1] + 1e-12:
        total += g[-1] * mom(s[-1], T_end, 0)
    return TimeIntegratedNorm(float(total), ts, norms, beta)


def gaussian_lp_norm(d: int, var: float, p_prime: float) -> float:
    """||N(0, var I)||_{L_p'} in closed form."""
    return (2 * math.pi * var) ** (-0.5 * d * (1 - 1 / p_prime)) * p_prime ** (-0.5 * d / p_prime)
