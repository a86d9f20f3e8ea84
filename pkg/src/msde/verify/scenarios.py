"""Scenario recipes: each builds fields and ensembles from params, budget and seed and
returns the two sides of a claim."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Dict, Optional

import numpy as np

from .. import chaos, mollify, spaces
from ..errors import ScenarioError
from ..fields import (brownian, build_drift_parabolic, constant_field, grid_to_field, ou_field, sample_to_grid,
                      zoo_field)
from ..simulate import (density_estimate, exit_time_functional, fdd_compare, girsanov_weights, lpq_norm,
                        mc_estimate, modulus_statistics, occupation_functional, simulate_paths,
                        time_integrated_norm, weight_convergence_check)
from . import oracles


@dataclass
class ScenarioResult:
    lhs: float
    rhs: Optional[float]
    std_error: float = 0.0
    rhs_unit: Optional[float] = None  # bound quantity without its constant
    series: Optional[list] = None  # trend claims: the monotone-candidate sequence
    series_std_errors: Optional[list] = None
    extras: dict = dc_field(default_factory=dict)


Scenario = Callable[[dict, dict, int, int], ScenarioResult]
REGISTRY: Dict[str, Scenario] = {}


def scenario(name: str):
    def register(fn):
        REGISTRY[name] = fn
        return fn

    return register


def _field(params: dict):
    kw = {k: params[k] for k in ("d", "gamma", "drift", "rate", "p", "n_max", "direction", "amplitude",
                                 "zeta_radius", "radius") if k in params}
    return zoo_field(params.get("field", "bm"), **kw)


def _ball_indicator(radius: float, t_end: float):
    return lambda t, x: ((np.sum(x * x, axis=1) < radius**2) & (t <= t_end)).astype(float)


@scenario("occupation-brownian")
def occupation_brownian(params, budget, seed, workers):
    """E(int_0^T f(s, w_s) ds)^m against C ||f||_{L_{p,q}}^m."""
    d = int(params.get("d", 2))
    T = float(params.get("T", 1.0))
    m = int(params.get("m", 1))
    p, q = float(params.get("p", 6.0)), float(params.get("q", 6.0))
    kind = params.get("f", "ball")
    f = (lambda t, x: np.zeros(x.shape[0])) if kind == "zero" else _ball_indicator(1.0, T)
    ens = simulate_paths(brownian(d), 0.0, np.zeros(d), T, float(budget.get("dt", 1e-2)),
                         int(budget.get("M", 10000)), seed, workers=workers)
    est = occupation_functional(ens, f, m)
    unit = 0.0 if kind == "zero" else lpq_norm(f, p, q, (0.0, T), np.zeros(d), 1.0, nx=64, nt=16) ** m
    const = params.get("constant")
    rhs = None if const is None else float(const) * unit
    if "oracle" in params:
        rhs = float(params["oracle"])
    elif params.get("oracle_from") == "heat-kernel":
        rhs = (oracles.ball_occupation(d, 1.0, T) if m == 1
               else oracles.ball_occupation_second_moment(d, 1.0, T))
    return ScenarioResult(est.value, rhs, est.std_error, unit, extras={"lpq_norm": unit ** (1 / m) if m else 0})


@scenario("chaos-residual")
def chaos_residual(params, budget, seed, workers):
    """Residual energy E|xi - Pi^n xi|^2 by simplex quadrature for a closed-form case."""
    case = params.get("case", "brownian-x2")
    n = int(params.get("order", 1))
    field, f, oracle = chaos_case(case, n)
    exp = chaos.chaos_coefficients(field, f, float(params.get("r", 1.0)), n + 1, nx=budget.get("nx"))
    val = exp.residual(n)
    rhs = float(params["oracle"]) if "oracle" in params else oracle
    return ScenarioResult(val, rhs, 0.0, extras={"quadrature_error": exp.levels[n + 1].quadrature_error})


def chaos_case(case: str, n: int):
    """(field, f, residual oracle at order n, r = 1) for the named closed-form cases."""
    if case == "brownian-x2":
        return brownian(1), (lambda x: x[:, 0] ** 2), (2.0 if n <= 1 else 0.0)
    if case == "brownian-x":
        return brownian(1), (lambda x: x[:, 0]), (1.0 if n == 0 else 0.0)
    if case == "ou-x":
        return ou_field(1), (lambda x: x[:, 0]), ((1 - math.exp(-2.0)) / 2 if n == 0 else 0.0)
    raise ScenarioError(f"unknown chaos case {case!r}")


@scenario("morrey")
def morrey(params, budget, seed, workers):
    b = _field(params)
    spec = spaces.SamplerSpec(n_points=int(budget.get("points", 4096)), seed=seed, workers=workers,
                              centers_per_axis=int(budget.get("centers", 5)))
    cert = spaces.morrey_constant(b, float(params.get("p", 2.0)), float(params.get("r_max", 0.5)), spec)
    rhs = params.get("oracle")
    return ScenarioResult(cert.value, None if rhs is None else float(rhs), cert.quadrature_error,
                          extras={"argmax": cert.argmax})


@scenario("vmo")
def vmo(params, budget, seed, workers):
    a = _field(params)
    spec = spaces.SamplerSpec(n_points=int(budget.get("points", 4096)), seed=seed, workers=workers,
                              centers_per_axis=int(budget.get("centers", 3)))
    cert = spaces.vmo_modulus(a, float(params.get("rho", 0.1)), spec)
    rhs = params.get("oracle", 0.0)
    return ScenarioResult(cert.value, float(rhs), cert.quadrature_error)


@scenario("split-identity")
def split_identity(params, budget, seed, workers):
    d = int(params.get("d", 2))
    b = zoo_field("bump", d=d, amplitude=float(params.get("amplitude", 1.0)))
    sp = spaces.split_drift(b, float(params.get("p", 4.0)), float(params.get("N_hat", 1.0)),
                            n_t=int(budget.get("n_t", 32)), spatial_nodes=int(budget.get("nodes", 48)))
    return ScenarioResult(sp.lambda_sq_integral, sp.rhs_integral, 0.0,
                          extras={"relative_difference": abs(sp.lambda_sq_integral / sp.rhs_integral - 1)})


@scenario("range-projection")
def range_projection_defects(params, budget, seed, workers):
    rng = np.random.default_rng([seed, 7])
    worst = 0.0
    for _ in range(int(params.get("count", 200))):
        d = int(rng.integers(1, 5))
        d1 = int(rng.integers(d, d + 4))
        rank = int(rng.integers(0, d + 1))
        s = rng.normal(size=(d, rank)) @ rng.normal(size=(rank, d1))
        worst = max(worst, max(chaos.range_projection(s).defects().values()))
    return ScenarioResult(worst, 0.0, 0.0)


@scenario("girsanov-mean")
def girsanov_mean(params, budget, seed, workers):
    d = int(params.get("d", 2))
    c = np.asarray(params.get("drift", [0.5] * d), dtype=float)
    split = spaces.threshold_split(constant_field(d, drift=c), lambda t: np.full(np.shape(t), np.inf), n_t=4)
    ens = simulate_paths(brownian(d), 0.0, np.zeros(d), float(params.get("T", 1.0)),
                         float(budget.get("dt", 0.02)), int(budget.get("M", 100000)), seed, workers=workers)
    w = girsanov_weights(ens, split, 0.0, sign=1)
    est = mc_estimate(w.weight)
    return ScenarioResult(est.value, 1.0, est.std_error)


@scenario("girsanov-convergence")
def girsanov_convergence(params, budget, seed, workers):
    d = int(params.get("d", 2))
    b = zoo_field("bump", d=d, amplitude=float(params.get("amplitude", 1.0)), radius=0.5)
    split = spaces.threshold_split(b, lambda t: np.full(np.shape(t), np.inf), n_t=16)
    ens = simulate_paths(b, 0.0, np.zeros(d), float(params.get("T", 1.0)), float(budget.get("dt", 0.02)),
                         int(budget.get("M", 20000)), seed, workers=workers)
    top = float(split.b_tilde_cells.max())
    ns = [top * f for f in params.get("fractions", [0.0, 0.25, 0.5, 0.75, 1.0])]
    rep = weight_convergence_check(ens, split, ns, float(params.get("constant", 1.0)))
    vals = [r.estimate.value for r in rep.rows]
    ses = [r.estimate.std_error for r in rep.rows]
    return ScenarioResult(vals[-1], 0.0, ses[-1], series=vals, series_std_errors=ses)


@scenario("exit-time")
def exit_time(params, budget, seed, workers):
    """E min(tau_C, rho^2) for Brownian motion from the cylinder's center; oracle by Bessel series."""
    d = int(params.get("d", 2))
    rho = float(params.get("rho", 0.5))
    dt = float(budget.get("dt", rho**2 / 400))
    ens = simulate_paths(brownian(d), 0.0, np.zeros(d), rho**2, dt, int(budget.get("M", 20000)), seed,
                         workers=workers)
    est = exit_time_functional(ens, 0.0, np.zeros(d), rho)
    bound = params.get("bound")
    rhs = rho**2 if bound == "time-side" else oracles.exit_time_capped(d, rho)
    return ScenarioResult(est.value, rhs, est.std_error, rhs_unit=rho**2)


@scenario("exit-time-drift")
def exit_time_drift(params, budget, seed, workers):
    """E int_0^{tau_C} |b| ds for a mollified small parabolic drift against m_b rho."""
    d = int(params.get("d", 2))
    rho = float(params.get("rho", 0.5))
    b = _tabulated(build_drift_parabolic(float(params.get("gamma", 0.1)), d), float(params.get("n", 8)),
                   params.get("kernel", "bump"), budget)
    dt = float(budget.get("dt", rho**2 / 200))
    x0 = np.asarray(params.get("x0", [0.0] * d), dtype=float)
    t0 = float(params.get("t0", 0.0))
    ens = simulate_paths(b, t0, x0, rho**2, dt, int(budget.get("M", 10000)), seed, workers=workers)
    g = lambda t, x: np.linalg.norm(b.drift(t, x), axis=1)
    est = exit_time_functional(ens, t0, x0, rho, g)
    const = params.get("constant")
    return ScenarioResult(est.value, None if const is None else float(const) * rho, est.std_error, rhs_unit=rho)


@scenario("modulus")
def modulus(params, budget, seed, workers):
    d = int(params.get("d", 1))
    n = float(params.get("n", 2))
    dt = float(budget.get("dt", 1e-3))
    T = float(params.get("T", 1.0))
    ens = simulate_paths(brownian(d), 0.0, np.zeros(d), T, dt, int(budget.get("M", 20000)), seed,
                         workers=workers)
    windows = [int(w) for w in params.get("windows", [32, 64, 128, 256, 512])]
    res = modulus_statistics(ens, n, windows)
    return ScenarioResult(res.slope, n / 2.0, 0.0, extras={"estimates": res.estimates.tolist()})


@scenario("density-l1")
def density_l1(params, budget, seed, workers):
    d = int(params.get("d", 2))
    T = float(params.get("T", 1.0))
    ens = simulate_paths(brownian(d), 0.0, np.zeros(d), T, float(budget.get("dt", T)),
                         int(budget.get("M", 100000)), seed, workers=workers)
    est = density_estimate(ens, T)
    exact = lambda x: np.exp(-np.sum(x * x, axis=1) / (2 * T)) / (2 * math.pi * T) ** (d / 2)
    return ScenarioResult(est.l1_distance(exact), float(params.get("bound", 0.05)), 0.0)


@scenario("density-time-norm")
def density_time_norm(params, budget, seed, workers):
    d = int(params.get("d", 2))
    pp, qq = float(params.get("p_prime", 2.0)), float(params.get("q_prime", 1.5))
    n_times = int(params.get("n_times", 10))
    dt = 1.0 / n_times
    ens = simulate_paths(brownian(d), 0.0, np.zeros(d), 1.0, dt, int(budget.get("M", 100000)), seed,
                         workers=workers)
    res = time_integrated_norm(ens, dt * np.arange(1, n_times + 1), pp, qq)
    return ScenarioResult(res.value, oracles.heat_time_integrated_norm(d, 1.0, pp, qq), 0.0,
                          extras={"finite": bool(math.isfinite(res.value))})


def scaling_exponent(d: int, p: float, q: float, Ts, M: int, steps: int, seed: int, workers: int = 1):
    """Fitted exponent of occupation / ||f_T||_{L_{p,q}} in T, f_T(t, x) = f(t/T, x/sqrt T)."""
    ratios = []
    # distinct seeds per horizon; a shared seed makes the paths exact rescalings of each other
    for i, T in enumerate(Ts):
        def fT(t, x, T=T):
            return ((np.sum(x * x, axis=1) / T < 1.0) & (t / T <= 1.0)).astype(float)

        ens = simulate_paths(brownian(d), 0.0, np.zeros(d), T, T / steps, M, seed + i, workers=workers)
        occ = occupation_functional(ens, fT, 1)
        norm = lpq_norm(fT, p, q, (0.0, T), np.zeros(d), math.sqrt(T), nx=64, nt=16)
        ratios.append(occ.value / norm)
    slope = np.polyfit(np.log(Ts), np.log(ratios), 1)[0]
    return float(slope), ratios


@scenario("scaling-law")
def scaling_law(params, budget, seed, workers):
    d = int(params.get("d", 2))
    p, q = float(params.get("p", 2.0)), float(params.get("q", 4.0))
    Ts = [float(v) for v in params.get("T", [0.25, 0.5, 1.0])]
    slope, ratios = scaling_exponent(d, p, q, Ts, int(budget.get("M", 10000)), int(budget.get("steps", 100)),
                                     seed, workers)
    target = 1.0 - 0.5 * (d / p + 2.0 / q)
    return ScenarioResult(slope, target, 0.0, extras={"ratios": ratios})


def _tabulated(field, n: float, kernel: str, budget: dict):
    """Mollify and tabulate on a (t, x) grid covering the mollified support."""
    moll = mollify.mollify(field, n, nodes=int(budget.get("kernel_nodes", 8)), kernel=kernel)
    half = field.support_radius + 1.0 / n + 0.05
    nt, nx = int(budget.get("grid_t", 33)), int(budget.get("grid_x", 81))
    bounds = [[0.0, 1.0 + 1.0 / n]] + [[-half, half]] * field.d
    grid = sample_to_grid(moll, "drift", bounds, [nt] + [nx] * field.d)
    return grid_to_field(grid, "drift", name=f"{moll.name}@grid")


@scenario("fdd-kernels")
def fdd_kernels(params, budget, seed, workers):
    """Largest KS distance between two mollification kernels of a small parabolic drift."""
    d = int(params.get("d", 2))
    base = build_drift_parabolic(float(params.get("gamma", 0.1)), d)
    n = float(params.get("n", 8))
    kernels = params.get("kernels", ["bump", "bump2"])
    M = int(budget.get("M", 10000))
    dt = float(budget.get("dt", 0.01))
    T = float(params.get("T", 1.0))
    times = [float(v) for v in params.get("times", [0.25, 0.5, 1.0])]
    fa, fb = (_tabulated(base, n, k, budget) for k in kernels)
    ea = simulate_paths(fa, 0.0, np.zeros(d), T, dt, M, seed, workers=workers)
    eb = simulate_paths(fb, 0.0, np.zeros(d), T, dt, M, seed + 1, workers=workers)
    if params.get("null"):
        eb = simulate_paths(fa, 0.0, np.zeros(d), T, dt, M, seed + 1, workers=workers)
    cmp = fdd_compare(ea, eb, times, reps=int(budget.get("reps", 1000)))
    return ScenarioResult(float(cmp.distances.max()), cmp.threshold, 0.0,
                          extras={"distances": cmp.distances.tolist(), "tests": cmp.names})


@scenario("gradient-ou")
def gradient_ou(params, budget, seed, workers):
    """First partial sum of the gradient inequality against its left side for OU with f = x."""
    r = float(params.get("r", 1.0))
    rep = chaos.gradient_bound_check(ou_field(1), lambda x: x[:, 0], 0.0, r, [float(params.get("x", 0.3))],
                                     [float(params.get("eta", 1.0))], n=int(params.get("order", 1)),
                                     M=int(budget.get("M", 2000)), dt=float(budget.get("dt", 1e-3)), seed=seed)
    return ScenarioResult(float(rep.partial_sums[-1]), rep.lhs.value, rep.lhs.std_error,
                          extras={"raw_lhs": rep.lhs_raw.value})


@scenario("simulate-moments")
def simulate_moments(params, budget, seed, workers):
    """Mean displacement of x_T against b T for a constant drift; singular fields need a cap."""
    field = _field(params)
    d = field.d
    T = float(params.get("T", 1.0))
    cap = params.get("drift_cap")
    ens = simulate_paths(field, 0.0, np.asarray(params.get("x0", [0.0] * d), dtype=float), T,
                         float(budget.get("dt", 0.01)), int(budget.get("M", 10000)), seed,
                         None if cap is None else float(cap), workers=workers)
    xT = ens.terminal()
    est = mc_estimate(xT[:, 0])
    rhs = float(params.get("oracle", 0.0))
    return ScenarioResult(est.value, rhs, est.std_error)


@scenario("ou-variance")
def ou_variance(params, budget, seed, workers):
    T = float(params.get("T", 1.0))
    ens = simulate_paths(ou_field(1), 0.0, [0.0], T, float(budget.get("dt", 1e-3)), int(budget.get("M", 20000)),
                         seed, workers=workers)
    x = ens.terminal()[:, 0]
    v = float(np.var(x, ddof=1))
    se = v * math.sqrt(2.0 / (x.size - 1))
    return ScenarioResult(v, (1 - math.exp(-2 * T)) / 2, se)


@scenario("select-m")
def select_m_check(params, budget, seed, workers):
    n, delta, N_d = int(params.get("n", 100)), float(params.get("delta", 0.25)), float(params.get("N_d", 1.0))
    m = mollify.select_m(n, delta, N_d)
    ok = N_d * m / n <= math.sqrt(delta) / 4 and N_d * (m + 1) / n > math.sqrt(delta) / 4
    return ScenarioResult(float(m), float(params.get("oracle", m)), 0.0, extras={"maximal": bool(ok)})
