"""Iterated expansion of f(x_r) in multiple Ito integrals and its residual energies.

Every coefficient T_{t,t_m} Q^{k_m} ... Q^{k_1} f evaluated at the start point is a
linear functional of a grid function, so it is read off with an observation vector
propagated by the adjoint of the backward solver. Directional derivatives at the
start point reuse the same machinery with a difference-quotient observation.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Dict, Optional, Sequence

import numpy as np

from ..errors import BudgetError, UsageError
from ..fields import CoefficientField
from .semigroup import DEFAULT_NX, Grid, Stepper, TerminalFn, _default_steps, truncation_radius

DEFAULT_LEVEL_NODES = {1: 32, 2: 32, 3: 12, 4: 16}
MC_LEVELS = frozenset({4})
MAX_LEVEL = 4
DEFAULT_BUDGET = 5e10  # grid-point updates


@dataclass
class LevelData:
    m: int
    nodes: int  # intervals of the node grid on [t, r]
    rule: str  # "trapezoid" or "mc"
    tuples: np.ndarray  # (T, m) node indices, nonincreasing
    weights: np.ndarray  # (T,)
    coefficients: np.ndarray  # (T, d1^m): observation of Q...f after the outer semigroup
    residual_integrand: np.ndarray  # (T, d1^m): observation of the squared chain
    coarse_weights: Optional[np.ndarray] = None  # trapezoid on every other node, for the error proxy
    mc_std_error: float = 0.0

    @property
    def coefficient_energy(self) -> float:
        return float(np.sum(self.weights * np.sum(self.coefficients**2, axis=1)))

    @property
    def residual_energy(self) -> float:
        return float(np.sum(self.weights * np.sum(self.residual_integrand, axis=1)))

    @property
    def quadrature_error(self) -> float:
        if self.rule == "mc":
            return self.mc_std_error
        cw = self.coarse_weights
        coarse = float(np.sum(cw * np.sum(self.residual_integrand, axis=1)))
        return abs(coarse - self.residual_energy)


@dataclass
class ChaosExpansion:
    order: int
    t: float
    r: float
    x0: np.ndarray
    d1: int
    mean: float  # order-0 coefficient T_{t,r} f observed at the start
    second_moment: float  # observation of T_{t,r} f^2
    levels: Dict[int, LevelData]
    grid_steps: np.ndarray
    pde_steps: int
    radius: float
    meta: dict = dc_field(default_factory=dict)

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2

    def coefficient_energy(self, m: int) -> float:
        return self.levels[m].coefficient_energy

    def residual(self, n: int) -> float:
        """E|xi - Pi^n xi|^2 from the level n+1 integrand."""
        if n + 1 not in self.levels:
            raise UsageError(f"residual of order {n} needs coefficients through order {n + 1}")
        return self.levels[n + 1].residual_energy

    def commutation_error(self) -> float:
        """Direct variance minus the order-0 residual; nonzero only through grid effects."""
        return self.variance - self.residual(0)

    def pythagoras_defects(self) -> dict:
        """R_{m-1} - R_m - C_m for every m with levels m and m+1 available."""
        return {m: self.residual(m - 1) - self.residual(m) - self.levels[m].coefficient_energy
                for m in sorted(self.levels) if m + 1 in self.levels}

    def to_json(self) -> dict:
        return {
            "order": self.order, "t": self.t, "r": self.r, "x0": self.x0.tolist(),
            "mean": self.mean, "variance": self.variance,
            "levels": [
                {"m": L.m, "rule": L.rule, "nodes": L.nodes,
                 "multi_indices": [list(k) for k in itertools.product(range(1, self.d1 + 1), repeat=L.m)],
                 "node_times": (self.t + (self.r - self.t) * np.arange(L.nodes + 1) / L.nodes).tolist(),
                 "tuples": L.tuples.tolist(), "weights": L.weights.tolist(),
                 "coefficients": L.coefficients.tolist(),
                 "coefficient_energy": L.coefficient_energy, "residual_energy": L.residual_energy,
                 "quadrature_error": L.quadrature_error}
                for L in (self.levels[m] for m in sorted(self.levels))
            ],
            "pde": {"steps": self.pde_steps, "dx": self.grid_steps.tolist(), "radius": self.radius},
            **self.meta,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _trapezoid(n: int, length: float) -> np.ndarray:
    w = np.full(n + 1, length / n)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def _simplex_trapezoid(m: int, n: int, length: float):
    """Nonincreasing index tuples with weights prod w / prod(multiplicity!), the symmetric-extension rule."""
    w = _trapezoid(n, length)
    tuples = np.array(list(itertools.combinations_with_replacement(range(n, -1, -1), m)), dtype=np.int64)
    wt = np.prod(w[tuples], axis=1)
    for row_i, row in enumerate(tuples):
        _, counts = np.unique(row, return_counts=True)
        wt[row_i] /= np.prod([math.factorial(c) for c in counts])
    coarse = np.zeros_like(wt)
    if n % 2 == 0:
        wc = _trapezoid(n // 2, length)
        even = np.all(tuples % 2 == 0, axis=1)
        for row_i in np.flatnonzero(even):
            row = tuples[row_i]
            _, counts = np.unique(row, return_counts=True)
            coarse[row_i] = np.prod(wc[row // 2]) / np.prod([math.factorial(c) for c in counts])
    return tuples, wt, coarse


def _simplex_mc(m: int, n: int, length: float, samples: int, seed: int):
    """Uniform points on the ordered simplex snapped to the node grid; repeated tuples merged."""
    rng = np.random.default_rng([seed, m, n, 52361])
    u = -np.sort(-rng.random((samples, m)), axis=1)
    snapped = np.rint(u * n).astype(np.int64)
    tuples, counts = np.unique(snapped, axis=0, return_counts=True)
    vol = length**m / math.factorial(m)
    return tuples, counts * (vol / samples), counts


class _ChainEvaluator:
    def __init__(self, field: CoefficientField, f: TerminalFn, t: float, r: float, x0, nx, radius, steps,
                 node_counts, observation):
        self.field = field
        R = truncation_radius(field, x0, r - t) if radius is None else float(radius)
        self.grid = Grid.centered(x0, R, nx or DEFAULT_NX.get(field.d, 0))
        base = steps or _default_steps(r - t, float(self.grid.steps.min()))
        lcm = 1
        for n in node_counts:
            lcm = lcm * n // math.gcd(lcm, n)
        self.K = lcm * max(1, math.ceil(base / lcm))
        self.radius = R
        self.t, self.r = t, r
        self.st = Stepper(field, self.grid, t, r, self.K)
        self.f = np.asarray(f(self.grid.points), dtype=float).reshape(-1)
        self.obs0 = observation(self.grid)
        self.work = 0.0
        obs = [self.obs0]
        for j in range(1, self.K + 1):
            obs.append(self.st.adjoint(obs[-1], j))
        self.obs = obs  # obs[j] . g = T_{t, t_j} g observed at the start

    def q(self, s: float, cols: np.ndarray) -> np.ndarray:
        """Apply Q^k at time s to each column of (N, c): result (N, c * d1), column-major in k."""
        shape = self.grid.shape
        c = cols.shape[1]
        U = cols.T.reshape((c,) + shape)
        grads = np.gradient(U, *self.grid.axes, axis=tuple(range(1, self.grid.d + 1)), edge_order=2)
        if self.grid.d == 1:
            grads = [grads]
        G = np.stack([g.reshape(c, -1) for g in grads])  # (d, c, N)
        sig = self.field.sigma(s, self.grid.points)  # (N, d, d1)
        out = np.einsum("nik,icn->nck", sig, G)
        return out.reshape(out.shape[0], c * self.field.d1)

    def level(self, m: int, n: int, tuples: np.ndarray):
        """Evaluate coefficients and squared-chain observations at the given node tuples."""
        step = self.K // n
        d1 = self.field.d1
        coef = np.zeros((tuples.shape[0], d1**m))
        resid = np.zeros_like(coef)
        children: dict = {}
        row_of = {}
        for i, row in enumerate(tuples):
            key = tuple(int(v) for v in row)
            row_of[key] = i
            for depth in range(m):
                children.setdefault(key[:depth], set()).add(key[depth])

        def descend(prefix: tuple, cols: np.ndarray, J: int):
            depth = len(prefix)
            nxt = sorted(children.get(prefix, ()), reverse=True)
            if not nxt:
                return
            kept = [i * step for i in nxt]
            sol = self.st.solve(cols, J, kept)
            self.work += (J - min(kept)) * cols.shape[1] * self.grid.size
            for i in nxt:
                ji = i * step
                h = self.q(self.t + ji * self.st.dt, sol[ji])
                key = prefix + (i,)
                if depth + 1 == m:
                    w = self.obs[ji]
                    row = row_of[key]
                    coef[row] = w @ h
                    resid[row] = w @ (h * h)
                else:
                    descend(key, h, ji)

        descend((), self.f[:, None], self.K)
        return coef, resid


def _estimate_work(N: int, K: int, m: int, n: int, d1: int) -> float:
    # every internal trie node runs one backward solve of at most K steps
    internal = sum(math.comb(n + j, j) * d1**j for j in range(m))
    return float(internal) * K * N


def _point_observation(x0):
    return lambda grid: grid.interpolation_weights(x0)


def _directional_observation(x0, eta, h=None):
    eta = np.asarray(eta, dtype=float)

    def obs(grid: Grid):
        hh = float(grid.steps.min()) if h is None else h
        return (grid.interpolation_weights(x0 + hh * eta) - grid.interpolation_weights(x0 - hh * eta)) / (2 * hh)

    return obs


def chaos_coefficients(field: CoefficientField, f: TerminalFn, r: float, n: int, t: float = 0.0, x0=None,
                       level_nodes: Optional[dict] = None, mc_points: int = 4096, seed: int = 0,
                       nx: Optional[int] = None, radius: Optional[float] = None, steps: Optional[int] = None,
                       direction=None, budget: float = DEFAULT_BUDGET, levels: Optional[Sequence[int]] = None
                       ) -> ChaosExpansion:
    """Coefficient functions through order ``n`` (levels 1..n) on simplex quadrature grids.

    ``direction`` replaces the point observation at x0 by a central difference along it,
    giving the directional derivatives of every coefficient at x0.
    """
    if field.d > 2:
        raise UsageError("chaos coefficients need d <= 2")
    if not (0 <= n <= MAX_LEVEL):
        raise UsageError(f"order must lie in 0..{MAX_LEVEL}")
    if not r > t:
        raise UsageError("need r > t")
    x0 = np.zeros(field.d) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    nodes = dict(DEFAULT_LEVEL_NODES)
    nodes.update(level_nodes or {})
    want = list(range(1, n + 1)) if levels is None else sorted(set(int(m) for m in levels))
    obs = _point_observation(x0) if direction is None else _directional_observation(x0, direction)
    ev = _ChainEvaluator(field, f, t, r, x0, nx, radius, steps, [nodes[m] for m in want] or [1], obs)
    est = sum(_estimate_work(ev.grid.size, ev.K, m, nodes[m], field.d1) for m in want)
    if est > budget:
        raise BudgetError(f"chaos quadrature needs about {est:.3g} grid updates; budget is {budget:.3g}")
    top = ev.obs[ev.K]
    mean = float(top @ ev.f)
    second = float(top @ (ev.f * ev.f))
    out = {}
    for m in want:
        nm = nodes[m]
        if m in MC_LEVELS:
            tuples, weights, counts = _simplex_mc(m, nm, r - t, mc_points, seed)
            coarse = None
        else:
            tuples, weights, coarse = _simplex_trapezoid(m, nm, r - t)
        coef, resid = ev.level(m, nm, tuples)
        L = LevelData(m, nm, "mc" if m in MC_LEVELS else "trapezoid", tuples, weights, coef, resid, coarse)
        if m in MC_LEVELS:
            vals = np.repeat(np.sum(resid, axis=1), counts)
            vol = (r - t) ** m / math.factorial(m)
            L.mc_std_error = float(vol * np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        out[m] = L
    return ChaosExpansion(n, t, r, x0, field.d1, mean, second, out, ev.grid.steps, ev.K, ev.radius,
                          {"observation": "point" if direction is None else "directional"})


def residual_energy(exp: ChaosExpansion, n: int) -> float:
    """E|xi - Pi^n xi|^2 by simplex quadrature of the squared order-(n+1) chain."""
    return exp.residual(n)
