"""Backward Kolmogorov solves on a truncated grid (d <= 2) by Crank-Nicolson finite differences."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import splu

from ..errors import FieldDefectError, QuadratureError, UsageError
from ..fields import CoefficientField

DEFAULT_NX = {1: 801, 2: 121}
LU_CACHE_NNZ = 20_000_000
MAX_CELL_PECLET = 2.0

TerminalFn = Callable[[np.ndarray], np.ndarray]  # (N, d) -> (N,)


def truncation_radius(field: CoefficientField, x0, horizon: float) -> float:
    """|x0| + 6 sqrt(T / delta) + sup|b| T, at least 4; leaves Gaussian tail mass below 1e-8."""
    x0 = np.asarray(x0, dtype=float)
    core = float(np.linalg.norm(x0)) + 6.0 * math.sqrt(max(horizon, 1e-12) / field.delta)
    g = np.linspace(-core, core, 17)
    pts = x0 + np.stack(np.meshgrid(*([g] * field.d), indexing="ij"), axis=-1).reshape(-1, field.d)
    bmax = float(np.max(np.linalg.norm(field.drift(0.0, pts, on_singular="zero"), axis=1)))
    return max(4.0, core + bmax * horizon)


@dataclass(frozen=True)
class Grid:
    axes: tuple  # per-axis node coordinates

    @classmethod
    def centered(cls, center, radius: float, n: int) -> "Grid":
        c = np.asarray(center, dtype=float)
        return cls(tuple(np.linspace(ci - radius, ci + radius, n) for ci in c))

    @property
    def d(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def steps(self) -> np.ndarray:
        return np.array([a[1] - a[0] for a in self.axes])

    @property
    def points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1).reshape(-1, self.d)

    @property
    def boundary(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.d, -1)
        mask = np.zeros(self.size, dtype=bool)
        for j, n in enumerate(self.shape):
            mask |= (idx[j] == 0) | (idx[j] == n - 1)
        return mask

    def interpolation_weights(self, x) -> np.ndarray:
        """Dense vector w with w . u = multilinear interpolant of u at x."""
        x = np.asarray(x, dtype=float).reshape(-1)
        w = np.zeros(self.shape)
        base, frac = [], []
        for j, a in enumerate(self.axes):
            pos = (x[j] - a[0]) / (a[1] - a[0])
            if not (0.0 <= pos <= a.size - 1):
                raise UsageError("point outside the solver grid")
            i0 = min(int(math.floor(pos)), a.size - 2)
            base.append(i0)
            frac.append(pos - i0)
        for corner in range(1 << self.d):
            idx, wt = [], 1.0
            for j in range(self.d):
                bit = (corner >> j) & 1
                idx.append(base[j] + bit)
                wt *= frac[j] if bit else 1.0 - frac[j]
            w[tuple(idx)] += wt
        return w.reshape(-1)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """(d, N) central-difference gradient of a grid function, second order at the edges."""
        g = np.gradient(u.reshape(self.shape), *self.axes, edge_order=2)
        if self.d == 1:
            g = [g]
        return np.stack([gi.reshape(-1) for gi in g])


def _generator(field: CoefficientField, grid: Grid, s: float) -> sp.csr_matrix:
    """Sparse (1/2) a^{ij} D_ij + b^i D_i with zero rows on the boundary."""
    pts = grid.points
    a = field.diffusion(s, pts)
    b = field.drift(s, pts)
    ev = np.linalg.eigvalsh(a)
    if not np.all(ev > 0):
        raise FieldDefectError(f"diffusion matrix not elliptic on the grid (min eigenvalue {ev.min():.3g})")
    h = grid.steps
    peclet = np.max(np.abs(b) * h[None, :] / np.diagonal(a, axis1=1, axis2=2))
    if peclet > MAX_CELL_PECLET:
        raise QuadratureError(f"grid too coarse: cell Peclet number {peclet:.2f} exceeds {MAX_CELL_PECLET}")
    shape = grid.shape
    N = grid.size
    interior = np.flatnonzero(~grid.boundary)
    strides = np.array([int(np.prod(shape[j + 1 :])) for j in range(grid.d)])
    rows, cols, vals = [], [], []

    def add(offset, coef):
        rows.append(interior)
        cols.append(interior + offset)
        vals.append(coef)

    ai = a[interior]
    bi = b[interior]
    diag = np.zeros(interior.size)
    for j in range(grid.d):
        s_j = strides[j]
        c2 = 0.5 * ai[:, j, j] / h[j] ** 2
        c1 = bi[:, j] / (2 * h[j])
        add(+s_j, c2 + c1)
        add(-s_j, c2 - c1)
        diag -= 2 * c2
    if grid.d == 2:
        cx = ai[:, 0, 1] / (4 * h[0] * h[1])
        s0, s1 = strides
        add(+s0 + s1, cx)
        add(-s0 - s1, cx)
        add(+s0 - s1, -cx)
        add(-s0 + s1, -cx)
    add(0, diag)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))


class Stepper:
    """Crank-Nicolson steps on a uniform time grid t_0 < ... < t_K; step j maps values at t_j to t_{j-1}."""

    def __init__(self, field: CoefficientField, grid: Grid, t_start: float, t_end: float, K: int):
        if field.d != grid.d:
            raise UsageError("grid and field dimensions differ")
        if field.d > 2:
            raise UsageError("grid solves support d <= 2")
        if not t_end > t_start or K < 1:
            raise UsageError("need t_end > t_start and at least one step")
        self.field = field
        self.grid = grid
        self.t_start = t_start
        self.K = K
        self.dt = (t_end - t_start) / K
        self._cache = {}
        self._cached_nnz = 0

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.K + 1)

    def _ops(self, j: int):
        key = j if self.field.time_dependent else 0
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        s = self.t_start + (j - 0.5) * self.dt
        L = _generator(self.field, self.grid, s)
        I = sp.identity(self.grid.size, format="csc")
        A = (I - 0.5 * self.dt * L).tocsc()
        B = (I + 0.5 * self.dt * L).tocsr()
        lu = splu(A)
        ops = (lu, B, B.T.tocsr())
        nnz = lu.L.nnz + lu.U.nnz
        if self._cached_nnz + nnz <= LU_CACHE_NNZ:
            self._cache[key] = ops
            self._cached_nnz += nnz
        return ops

    def back(self, u: np.ndarray, j: int) -> np.ndarray:
        """Values at t_{j-1} from values at t_j; ``u`` is (N,) or (N, k)."""
        lu, B, _ = self._ops(j)
        return lu.solve(B @ u)

    def adjoint(self, w: np.ndarray, j: int) -> np.ndarray:
        """w^T S_j for the step map S_j of :meth:`back`."""
        lu, _, BT = self._ops(j)
        return BT @ lu.solve(w, trans="T")

    def solve(self, data: np.ndarray, j_from: int, keep) -> dict:
        """Run backward from index ``j_from`` and return {j: values} for j in ``keep``."""
        want = set(int(k) for k in keep)
        if any(k > j_from or k < 0 for k in want):
            raise UsageError("kept indices must lie at or below the start index")
        out = {}
        u = np.array(data, dtype=float)
        if j_from in want:
            out[j_from] = u.copy()
        lo = min(want) if want else j_from
        for j in range(j_from, lo, -1):
            u = self.back(u, j)
            if j - 1 in want:
                out[j - 1] = u.copy()
        return out


@dataclass
class SemigroupSolution:
    r: float
    f: np.ndarray  # terminal data on the grid
    axes: tuple
    times: np.ndarray  # kept time levels, increasing
    values: np.ndarray  # (len(times), *grid shape)
    dt_pde: float
    dx: np.ndarray
    radius: float

    def _level(self, s: float) -> int:
        k = int(np.argmin(np.abs(self.times - s)))
        if abs(self.times[k] - s) > 1e-9 * max(1.0, abs(s)):
            raise UsageError(f"time {s} was not kept")
        return k

    def at(self, s: float, x) -> np.ndarray:
        """T_{s,r} f at points x of shape (n, d), by multilinear interpolation."""
        interp = RegularGridInterpolator(self.axes, self.values[self._level(s)], method="linear")
        return interp(np.atleast_2d(np.asarray(x, dtype=float)))

    def max_principle_gap(self) -> float:
        """How far the solution leaves [min f, max f]; zero for a monotone solve."""
        lo, hi = float(self.f.min()), float(self.f.max())
        return float(max(0.0, lo - self.values.min(), self.values.max() - hi))


def _default_steps(horizon: float, dx: float) -> int:
    return max(64, int(math.ceil(horizon / dx)))


def semigroup_solve(field: CoefficientField, f: TerminalFn, t: float, r: float, x0=None,
                    nx: Optional[int] = None, steps: Optional[int] = None, radius: Optional[float] = None,
                    keep: str = "all") -> SemigroupSolution:
    """u(s, .) = T_{s,r} f for s in [t, r] on a grid centered at ``x0``; u = f on the lateral boundary."""
    d = field.d
    c = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    R = truncation_radius(field, c, r - t) if radius is None else float(radius)
    grid = Grid.centered(c, R, nx or DEFAULT_NX.get(d, 0))
    K = steps or _default_steps(r - t, float(grid.steps.min()))
    st = Stepper(field, grid, t, r, K)
    fv = np.asarray(f(grid.points), dtype=float).reshape(-1)
    kept = range(K + 1) if keep == "all" else [0, K]
    sol = st.solve(fv, K, kept)
    idx = sorted(sol)
    vals = np.stack([sol[k].reshape(grid.shape) for k in idx])
    return SemigroupSolution(r, fv.reshape(grid.shape), grid.axes, st.times[idx], vals, st.dt, grid.steps, R)


@dataclass
class QOperatorResult:
    axes: tuple
    values: np.ndarray  # (d1, *grid shape)

    def at(self, x) -> np.ndarray:
        """(n, d1) values at points x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.stack([RegularGridInterpolator(self.axes, v)(x) for v in self.values], axis=1)


def apply_q(field: CoefficientField, grid: Grid, s: float, u: np.ndarray) -> np.ndarray:
    """sigma^{ik}(s, x) D_i u(x) for each k; ``u`` is (N,) and the result (d1, N)."""
    g = grid.gradient(u)
    sig = field.sigma(s, grid.points)
    return np.einsum("nik,in->kn", sig, g)


def q_operator(field: CoefficientField, f: TerminalFn, s: float, r: float, x0=None,
               nx: Optional[int] = None, steps: Optional[int] = None,
               radius: Optional[float] = None) -> QOperatorResult:
    """Q^k_{s,r} f = sigma^{ik}(s, .) D_i T_{s,r} f on the solver grid."""
    if s == r:
        c = np.zeros(field.d) if x0 is None else np.asarray(x0, dtype=float)
        R = truncation_radius(field, c, 0.0) if radius is None else float(radius)
        grid = Grid.centered(c, R, nx or DEFAULT_NX.get(field.d, 0))
        u = np.asarray(f(grid.points), dtype=float).reshape(-1)
    else:
        sol = semigroup_solve(field, f, s, r, x0, nx, steps, radius, keep="ends")
        grid = Grid(sol.axes)
        u = sol.values[0].reshape(-1)
    q = apply_q(field, grid, s, u)
    return QOperatorResult(grid.axes, q.reshape((field.d1,) + grid.shape))
