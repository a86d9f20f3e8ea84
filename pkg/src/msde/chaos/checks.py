"""Gradient inequality and summability of residual energies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from ..errors import UsageError
from ..fields import CoefficientField
from ..simulate.engine import PathEnsemble, euler_maruyama, simulate_paths
from ..simulate.flow import flow_chunk
from ..simulate.functionals import FunctionalEstimate, mc_estimate
from .expansion import ChaosExpansion, chaos_coefficients
from .projection import project_mc
from .semigroup import Grid, TerminalFn


def numeric_gradient(f: TerminalFn, h: float = 1e-5) -> Callable[[np.ndarray], np.ndarray]:
    """Central-difference gradient of a vectorized scalar function, (N, d) -> (N, d)."""

    def grad(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for j in range(x.shape[1]):
            e = np.zeros(x.shape[1])
            e[j] = h
            out[:, j] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h)
        return out

    return grad


@dataclass
class GradientBoundReport:
    lhs: FunctionalEstimate  # step-extrapolated when ``extrapolated`` is set
    lhs_raw: FunctionalEstimate  # plain Euler estimate at the ensemble step
    partial_sums: np.ndarray  # first term, then running sums through each order
    expansion: ChaosExpansion
    extrapolated: bool

    def gaps(self) -> np.ndarray:
        return self.lhs.value - self.partial_sums

    @property
    def passed(self) -> bool:
        return bool(self.gaps()[-1] >= -3.0 * self.lhs.std_error)

    def to_json(self) -> list:
        return [{"claim": f"gradient-inequality(order<={k})", "lhs": self.lhs.value,
                 "rhs_bound": float(s), "std_error": self.lhs.std_error,
                 "pass": bool(self.lhs.value - s >= -3.0 * self.lhs.std_error)}
                for k, s in enumerate(self.partial_sums)]


def _squared_directional(field, f_grad, t0, dt, paths, dw, eta):
    flow = flow_chunk(field, t0, dt, paths, dw, eta)
    return np.sum(f_grad(paths[:, -1, :]) * flow[:, -1, :], axis=1) ** 2


def gradient_bound_check(field: CoefficientField, f: TerminalFn, t: float, r: float, x, eta, n: int = 1,
                         ens: Optional[PathEnsemble] = None, M: int = 20000, dt: float = 1e-3, seed: int = 0,
                         grad_f: Optional[Callable] = None, extrapolate: bool = True,
                         **chaos_kw) -> GradientBoundReport:
    """E[Df(x_r) . eta_r]^2 against [(T_{t,r} f)_(eta)]^2 plus the energies of the differentiated
    chain coefficients through order ``n``.

    With ``extrapolate`` the left side is 2 L(dt) - L(2 dt) per path, the coarse path driven by
    pairwise sums of the same increments, which removes the first-order step bias.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    eta = np.asarray(eta, dtype=float).reshape(-1)
    if ens is None:
        ens = simulate_paths(field, t, x, r - t, dt, M, seed)
    elif not (math.isclose(ens.t0, t) and np.allclose(ens.x0, x) and math.isclose(ens.t0 + ens.T, r)):
        raise UsageError("ensemble must start at (t, x) and end at r")
    if extrapolate and ens.steps % 2:
        raise UsageError("step extrapolation needs an even number of steps")
    g = grad_f or numeric_gradient(f)

    def per_chunk(ids, paths, dw):
        fine = _squared_directional(field, g, ens.t0, ens.dt, paths, dw, eta)
        if not extrapolate:
            return np.stack([fine, fine], axis=1)
        dwc = dw[:, 0::2, :] + dw[:, 1::2, :]
        coarse_paths = euler_maruyama(field, ens.t0, ens.x0, 2 * ens.dt, ens.steps // 2, dwc, ens.drift_cap, ids)
        coarse = _squared_directional(field, g, ens.t0, 2 * ens.dt, coarse_paths, dwc, eta)
        return np.stack([fine, 2 * fine - coarse], axis=1)

    vals = ens.map_paths(per_chunk, with_increments=True)
    raw = mc_estimate(vals[:, 0])
    lhs = mc_estimate(vals[:, 1])
    exp = chaos_coefficients(field, f, r, n, t=t, x0=x, direction=eta, **chaos_kw)
    sums = [exp.mean**2]
    for m in range(1, n + 1):
        sums.append(sums[-1] + exp.levels[m].coefficient_energy)
    return GradientBoundReport(lhs, raw, np.array(sums), exp, extrapolate)


@dataclass
class SummabilityProfile:
    orders: list
    residuals: list  # quadrature residual energies E|xi - Pi^n xi|^2
    running_sum: list  # sums from n = 1
    gradient_norm: float  # (integral of |Df|^{2p})^{1/p}
    implied_constant: float
    mc_residuals: Optional[list] = None
    mc_std_errors: Optional[list] = None
    notes: dict = dc_field(default_factory=dict)

    def rows(self) -> list:
        out = []
        for i, n in enumerate(self.orders):
            row = {"order": n, "residual": self.residuals[i], "running_sum": self.running_sum[i]}
            if self.mc_residuals is not None:
                row["mc_residual"] = self.mc_residuals[i]
                row["mc_std_error"] = self.mc_std_errors[i]
            out.append(row)
        return out


def summability_profile(field: CoefficientField, f: TerminalFn, r: float, n_max: int = 3, p: float = 2.0,
                        ens: Optional[PathEnsemble] = None, **chaos_kw) -> SummabilityProfile:
    """Residual energies for n = 1..n_max, their running sum, and the smallest N with
    sum <= N (integral of |Df|^{2p})^{1/p}."""
    if not (1 <= n_max <= 3):
        raise UsageError("n_max must lie in 1..3")
    exp = chaos_coefficients(field, f, r, n_max + 1, **chaos_kw)
    orders = list(range(1, n_max + 1))
    res = [exp.residual(n) for n in orders]
    run = list(np.cumsum(res))
    grid = Grid.centered(exp.x0, exp.radius, 2 * int(round(exp.radius / exp.grid_steps.min())) + 1)
    gf = numeric_gradient(f)(grid.points)
    integral = float(np.sum(np.sum(gf * gf, axis=1) ** p) * np.prod(grid.steps))
    gnorm = integral ** (1.0 / p)
    implied = run[-1] / gnorm if gnorm > 0 else (0.0 if run[-1] == 0 else math.inf)
    prof = SummabilityProfile(orders, res, [float(v) for v in run], gnorm, implied,
                              notes={"quadrature_errors": [exp.levels[n + 1].quadrature_error for n in orders]})
    if ens is not None:
        pr = project_mc(ens, f, r, n_max)
        prof.mc_residuals = [float(v) for v in pr.residuals[1:]]
        prof.mc_std_errors = [float(v) for v in pr.std_errors[1:]]
    return prof
