"""Sampled estimators for scale-weighted local norms of coefficient fields.

Ball averages use a polar change of variables about a pole (the nearest
declared landmark inside the ball, else the center) with radius r = R v^k.
The Jacobian v^(kd-1) tames point singularities of order up to |x|^(-d+1/k),
so singular integrands keep finite variance. Every probe draws its own
seed from (sampler seed, center, radius, t), which makes the reported sup
monotone under adding probes and independent of the worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import QuadratureError, UsageError
from .fields import CoefficientField, replace_drift

# fraction of sample points allowed to land on the singular set
SINGULAR_HIT_LIMIT = 0.01


@dataclass(frozen=True)
class SamplerSpec:
    """Which balls and cylinders get probed."""

    box_center: Optional[Sequence[float]] = None  # defaults to the origin
    box_halfwidth: float = 0.5
    centers_per_axis: int = 5
    n_radii: int = 6
    times: Sequence[float] = (0.0,)
    n_points: int = 4096
    n_time_nodes: int = 8
    seed: int = 0
    refine: bool = True
    include_landmarks: bool = True
    power: Optional[float] = None  # radial exponent k; chosen from the integrand when None
    workers: int = 1


@dataclass
class MorreyCertificate:
    quantity: str
    value: float
    argmax: dict
    p: Optional[float] = None
    r_max: Optional[float] = None
    centers_probed: int = 0
    radii_probed: list = dc_field(default_factory=list)
    samples: int = 0
    quadrature_error: float = 0.0
    threshold: Optional[float] = None
    passed: Optional[bool] = None

    @property
    def constant(self) -> float:
        return self.value

    def to_json(self) -> dict:
        return {
            "quantity": self.quantity,
            "value": self.value,
            "argmax": self.argmax,
            "samples": self.samples,
            "quadrature_error": self.quadrature_error,
            "pass": self.passed,
            "threshold": self.threshold,
        }


# -- ball averages -------------------------------------------------------


def _probe_rng(seed: int, center: np.ndarray, radius: float, t: float, tag: str) -> np.random.Generator:
    h = hashlib.blake2b(digest_size=16)
    h.update(tag.encode())
    h.update(np.int64(seed).tobytes())
    h.update(np.ascontiguousarray(center, dtype=np.float64).tobytes())
    h.update(np.float64(radius).tobytes())
    h.update(np.float64(t).tobytes())
    return np.random.default_rng(np.frombuffer(h.digest(), dtype=np.uint32).tolist())


def _choose_pole(center, radius, landmarks):
    best, best_dist = np.asarray(center, dtype=float), math.inf
    for lm in landmarks:
        dist = float(np.linalg.norm(np.asarray(lm) - center))
        if dist < radius and dist < best_dist:
            best, best_dist = np.asarray(lm, dtype=float), dist
    return best


@dataclass
class BallSample:
    """Points of a ball laid out on rays from a pole, with ratio-estimator weights."""

    points: np.ndarray  # (pairs * 2 * n_rad, d)
    weights: np.ndarray
    pairs: int  # antithetic direction pairs; each pair is one independent sampling unit

    def average(self, values: np.ndarray):
        """Mean over the ball and its standard error across direction pairs.

        The weights have known mean one, so their sample mean serves as a
        control variate: exact for constants (ratio limit) and for integrands
        concentrated at the pole (plain limit).
        """
        v = values.reshape(values.shape[0], -1)
        w = self.weights
        n = self.pairs
        per = w.size // n
        Y = (w[:, None] * v).reshape(n, per, -1).sum(axis=1)
        X = w.reshape(n, per).sum(axis=1)
        Xc = X - X.mean()
        sxx = float(Xc @ Xc)
        if n < 2 or sxx <= 1e-24 * max(float(X @ X), 1e-300):
            mean = Y.sum(axis=0) / X.sum()
            resid = Y - X[:, None] * mean
        else:
            beta = (Xc @ (Y - Y.mean(axis=0))) / sxx
            mean = (Y.mean(axis=0) - beta * (X.mean() - per)) / per
            resid = Y - beta * Xc[:, None]
            resid = resid - resid.mean(axis=0)
        if n > 1:
            se = np.sqrt(np.sum(resid * resid, axis=0) / (n * (n - 1))) / per
        else:
            se = np.zeros_like(mean)
        shape = values.shape[1:]
        return mean.reshape(shape), se.reshape(shape)


def ball_sample(center, radius: float, pole, n_points: int, rng: np.random.Generator,
                power: float = 2.0, n_rad: Optional[int] = None) -> BallSample:
    """Rays from ``pole`` in antithetic direction pairs, each with a systematic radial grid.

    Along a ray of length R(theta) the radius is r = R v^power; v runs over
    n_rad strata sharing one random offset per ray.
    """
    center = np.asarray(center, dtype=float)
    d = center.size
    if n_rad is None:
        n_rad = 32 if n_points >= 512 else max(2, n_points // 16)
    pairs = max(1, n_points // (2 * n_rad))
    delta = np.asarray(pole, dtype=float) - center
    th = rng.standard_normal((pairs, d))
    th /= np.linalg.norm(th, axis=1, keepdims=True)
    dirs = np.stack([th, -th], axis=1).reshape(2 * pairs, d)
    offs = rng.random(2 * pairs)
    v = (np.arange(n_rad)[None, :] + offs[:, None]) / n_rad  # (rays, n_rad)
    proj = dirs @ delta
    R = -proj + np.sqrt(np.maximum(proj**2 - delta @ delta + radius**2, 0.0))
    r = R[:, None] * v**power
    pts = np.asarray(pole, dtype=float) + (r[:, :, None] * dirs[:, None, :])
    w = (R[:, None] / radius) ** d * d * power * v ** (power * d - 1.0)
    return BallSample(pts.reshape(-1, d), w.reshape(-1), pairs)


def _radial_power(spec_power, singular_order: Optional[float], d: int) -> float:
    if spec_power is not None:
        return float(spec_power)
    if singular_order is None or singular_order <= 0:
        return 2.0
    # need k (d - order) >= 1 for a bounded weighted integrand
    gap = d - singular_order
    if gap <= 0:
        raise QuadratureError(f"integrand ~|x|^-{singular_order} is not locally integrable in d={d}")
    return max(2.0, 1.0 / gap)


def _eval_masked(field: CoefficientField, which: str, t: float, pts: np.ndarray):
    fn = field.drift if which == "drift" else field.diffusion
    mask = field.singular(t, pts)
    hits = int(mask.sum())
    if hits > SINGULAR_HIT_LIMIT * pts.shape[0]:
        raise QuadratureError(f"{hits} of {pts.shape[0]} sample points hit the singular set")
    return fn(t, pts, on_singular="zero"), mask


# -- probe sets ----------------------------------------------------------


def _lattice_centers(spec: SamplerSpec, d: int, landmarks) -> list:
    c0 = np.zeros(d) if spec.box_center is None else np.asarray(spec.box_center, dtype=float)
    n = spec.centers_per_axis
    h = spec.box_halfwidth
    if n <= 1:
        base = [c0]
    else:
        axis = np.linspace(-h, h, n)
        grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
        rng = np.random.default_rng([spec.seed, 7919])
        jitter = (rng.random(grid.shape) - 0.5) * (2 * h / (n - 1)) * 0.5
        base = list(c0 + grid + jitter)
    if spec.include_landmarks:
        base = [np.asarray(l, dtype=float) for l in landmarks] + base
    return base


def _dyadic_radii(r_max: float, n: int) -> list:
    return [r_max * 2.0 ** (-k) for k in range(n)]


def _run_probes(probes, fn, workers: int):
    if workers <= 1 or len(probes) < 2:
        return [fn(p) for p in probes]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, probes))


def _sup(results):
    # associative: ties resolved by probe order
    best = None
    for r in results:
        if best is None or r[0] > best[0]:
            best = r
    return best


def _field_times(field: CoefficientField, spec: SamplerSpec):
    return list(spec.times) if field.time_dependent else [float(spec.times[0])]


# -- Morrey constant -------------------------------------------------------


def morrey_constant(b: CoefficientField, p: float, r_max: float, sampler: SamplerSpec = SamplerSpec(),
                    singular_order: Optional[float] = 1.0) -> MorreyCertificate:
    """sup over probed (t, ball of radius rho <= r_max) of rho * (mean |b|^p over the ball)^(1/p).

    ``singular_order`` is the assumed blow-up rate of |b| at its singular set and
    sets the radial power of the sampler; it never biases the estimate.
    """
    if p < 1:
        raise UsageError("p must be >= 1")
    if r_max <= 0:
        raise UsageError("r_max must be positive")
    d = b.d
    # bounded fields (no declared singular set) need no radial stretching
    order = None if singular_order is None or b.singular_fn is None else singular_order * p
    k = _radial_power(sampler.power, order, d)
    landmarks = b.landmarks

    def probe(args):
        t, c, rho = args
        rng = _probe_rng(sampler.seed, c, rho, t, "morrey")
        pole = _choose_pole(c, rho, landmarks)
        bs = ball_sample(c, rho, pole, sampler.n_points, rng, k)
        vals, _ = _eval_masked(b, "drift", t, bs.points)
        mag = np.sum(vals * vals, axis=1) ** (0.5 * p)
        mean, se = bs.average(mag)
        mean, se = float(mean), float(se)
        val = rho * mean ** (1.0 / p) if mean > 0 else 0.0
        rel = se / (p * mean) if mean > 0 else 0.0
        return (val, t, c, rho, rel)

    centers = _lattice_centers(sampler, d, landmarks)
    radii = _dyadic_radii(r_max, sampler.n_radii)
    times = _field_times(b, sampler)
    probes = [(t, c, r) for t in times for c in centers for r in radii]
    results = _run_probes(probes, probe, sampler.workers)
    best = _sup(results)
    n_probes = len(probes)
    if sampler.refine and best[0] > 0:
        _, t, c, rho, _ = best
        extra = []
        for j in range(d):
            for s in (-0.5, 0.5):
                e = np.zeros(d)
                e[j] = s * rho
                extra.append((t, c + e, rho))
        for fac in (2.0**-0.5, 2.0**0.5):
            if rho * fac <= r_max:
                extra.append((t, c, rho * fac))
        best = _sup([best] + _run_probes(extra, probe, sampler.workers))
        n_probes += len(extra)
        radii = sorted(set(radii) | {e[2] for e in extra})
    val, t, c, rho, rel = best
    return MorreyCertificate(
        quantity=f"morrey_constant(p={p:g})",
        value=float(val),
        argmax={"t": float(t), "x": np.asarray(c).tolist(), "rho": float(rho)},
        p=p,
        r_max=r_max,
        centers_probed=len(centers),
        radii_probed=sorted(radii, reverse=True),
        samples=n_probes * sampler.n_points,
        quadrature_error=float(rel),
    )


# -- mean oscillation ------------------------------------------------------


def vmo_modulus(a: CoefficientField, rho: float, sampler: SamplerSpec = SamplerSpec()) -> MorreyCertificate:
    """sup over probed cylinders [t, t + rho^2) x B_rho(x) of the mean of |a(s,y) - a_C(s)|.

    a_C(s) is the average of a(s, .) over the ball at fixed s; norms are Frobenius.
    """
    if rho <= 0:
        raise UsageError("rho must be positive")
    d = a.d
    k = _radial_power(sampler.power, None, d)
    n_t = sampler.n_time_nodes if a.time_dependent else 1

    def probe(args):
        t, c = args
        rng = _probe_rng(sampler.seed, c, rho, t, "vmo")
        pole = _choose_pole(c, rho, a.landmarks)
        bs = ball_sample(c, rho, pole, sampler.n_points, rng, k)
        s_nodes = t + rho**2 * (np.arange(n_t) + rng.random(n_t)) / n_t
        osc, var = 0.0, 0.0
        for s in s_nodes:
            vals, _ = _eval_masked(a, "diffusion", float(s), bs.points)
            a_c, _ = bs.average(vals)
            dev = np.sqrt(np.sum((vals - a_c) ** 2, axis=(1, 2)))
            m, se = bs.average(dev)
            osc += float(m) / n_t
            var += float(se) ** 2 / n_t**2
        return (osc, t, c, rho, math.sqrt(var))

    centers = _lattice_centers(sampler, d, a.landmarks)
    times = _field_times(a, sampler)
    probes = [(t, c) for t in times for c in centers]
    results = _run_probes(probes, probe, sampler.workers)
    best = _sup(results)
    if sampler.refine and best[0] > 0:
        _, t, c, _, _ = best
        extra = []
        for j in range(d):
            for s in (-0.5, 0.5):
                e = np.zeros(d)
                e[j] = s * rho
                extra.append((t, c + e))
        best = _sup([best] + _run_probes(extra, probe, sampler.workers))
        probes += extra
    val, t, c, _, se = best
    return MorreyCertificate(
        quantity=f"vmo_modulus(rho={rho:g})",
        value=float(val),
        argmax={"t": float(t), "x": np.asarray(c).tolist(), "rho": float(rho)},
        r_max=rho,
        centers_probed=len(centers),
        radii_probed=[rho],
        samples=len(probes) * sampler.n_points * n_t,
        quadrature_error=float(se / val) if val > 0 else float(se),
    )


# -- weak L^d criterion ----------------------------------------------------


@dataclass
class WeakLdResult:
    value: float
    per_lambda: np.ndarray  # sup over probes for each lambda
    std_error: np.ndarray  # at the maximizing probe for each lambda
    lambdas: np.ndarray
    argmax: dict


def weak_ld_criterion(b: CoefficientField, lambda_grid: Sequence[float],
                      sampler: SamplerSpec = SamplerSpec()) -> WeakLdResult:
    """sup of lambda^d |B cap {|b(t,.)| > lambda}| over probed t, unit balls and lambda."""
    lam = np.asarray(lambda_grid, dtype=float)
    if lam.size == 0:
        raise UsageError("lambda_grid must be nonempty")
    if np.any(lam <= 0):
        raise UsageError("lambdas must be positive")
    d = b.d
    unit_vol = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    unit_scale = lam**d * unit_vol

    def probe(args):
        t, c = args
        pole = _choose_pole(c, 1.0, b.landmarks)
        frac = np.empty(lam.size)
        se = np.empty(lam.size)
        for i, lv in enumerate(lam):
            # radial power grows with lambda so rays resolve superlevel sets of radius ~1/lambda
            k = sampler.power if sampler.power is not None else max(2.0, math.log(max(lv, 1.0)))
            rng = _probe_rng(sampler.seed, c, 1.0, t, f"weakld{lv!r}")
            # indicators are discontinuous along rays: many radial nodes, fewer directions
            bs = ball_sample(c, 1.0, pole, 4 * sampler.n_points, rng, k, n_rad=512)
            vals, _ = _eval_masked(b, "drift", t, bs.points)
            mag = np.sqrt(np.sum(vals * vals, axis=1))
            m, s_ = bs.average((mag > lv).astype(float))
            frac[i], se[i] = float(m), float(s_)
        return frac * unit_scale, se * unit_scale, t, c

    centers = _lattice_centers(sampler, d, b.landmarks)
    times = _field_times(b, sampler)
    results = _run_probes([(t, c) for t in times for c in centers], probe, sampler.workers)
    vals = np.stack([r[0] for r in results])
    ses = np.stack([r[1] for r in results])
    idx = np.argmax(vals, axis=0)
    per = vals[idx, np.arange(lam.size)]
    per_se = ses[idx, np.arange(lam.size)]
    j = int(np.argmax(per))
    r = results[idx[j]]
    return WeakLdResult(
        value=float(per[j]),
        per_lambda=per,
        std_error=per_se,
        lambdas=lam,
        argmax={"t": float(r[2]), "x": np.asarray(r[3]).tolist(), "rho": 1.0, "lambda": float(lam[j])},
    )


# -- drift splitting ---------------------------------------------------------


@dataclass
class DriftSplit:
    """b = b_M + b_B with b_M = b 1{|b| >= lambda(t)}; b_tilde stored as cell values on t_nodes."""

    lam: Callable[[np.ndarray], np.ndarray]
    b_M: Optional[CoefficientField]
    b_B: Optional[CoefficientField]
    t_nodes: np.ndarray  # cell edges covering the horizon
    b_tilde_cells: np.ndarray  # ess-sup estimate of |b_B(t, .)| on each cell
    p: Optional[float] = None
    N_hat: Optional[float] = None
    lambda_sq_integral: Optional[float] = None
    rhs_integral: Optional[float] = None

    @property
    def horizon(self):
        return float(self.t_nodes[0]), float(self.t_nodes[-1])

    def b_tilde(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.t_nodes, t, side="right") - 1, 0, self.b_tilde_cells.size - 1)
        inside = (t >= self.t_nodes[0]) & (t <= self.t_nodes[-1])
        return np.where(inside, self.b_tilde_cells[idx], 0.0)

    def cumulative(self) -> np.ndarray:
        """F at the cell edges: integral of b_tilde^2 from the horizon start."""
        return np.concatenate([[0.0], np.cumsum(self.b_tilde_cells**2 * np.diff(self.t_nodes))])

    @property
    def b_B_norm(self) -> float:
        return float(math.sqrt(self.cumulative()[-1]))

    def beta(self, t: float) -> float:
        return beta_modulus(self, t)

    def tail_integral(self, n_threshold: float) -> float:
        """Integral of b_tilde^2 1{b_tilde > n} over the horizon."""
        c = self.b_tilde_cells
        return float(np.sum(np.where(c > n_threshold, c**2, 0.0) * np.diff(self.t_nodes)))


def beta_modulus(split: DriftSplit, t: float) -> float:
    """sup_s of the integral of b_tilde^2 over [s, s + t]; b_tilde is zero off the horizon."""
    if t < 0:
        raise UsageError("window length must be >= 0")
    if t == 0:
        return 0.0
    edges = split.t_nodes
    F_edges = split.cumulative()

    def F(s):
        return np.interp(s, edges, F_edges, left=0.0, right=F_edges[-1])

    # G(s) = F(s + t) - F(s) is piecewise linear; its max sits at a breakpoint
    cand = np.concatenate([edges, edges - t])
    return float(max(0.0, np.max(F(cand + t) - F(cand))))


def _spatial_box(b: CoefficientField):
    if not math.isfinite(b.support_radius):
        raise QuadratureError("the L_p slice integral needs a drift with bounded support")
    c = np.zeros(b.d) if not b.support_center else np.asarray(b.support_center, dtype=float)
    return c, float(b.support_radius)


def _lp_slice_gauss(b: CoefficientField, p: float, t: float, nodes: int) -> float:
    c, R = _spatial_box(b)
    x, w = np.polynomial.legendre.leggauss(nodes)
    axes = [c[j] + R * x for j in range(b.d)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, b.d)
    ww = w
    for _ in range(b.d - 1):
        ww = np.multiply.outer(ww, w)
    ww = ww.reshape(-1) * R**b.d
    vals, _ = _eval_masked(b, "drift", t, pts)
    return float(np.sum(ww * np.sum(vals * vals, axis=1) ** (p / 2)))


def _simpson_weights(n: int, h: float) -> np.ndarray:
    if n % 2 == 0:
        raise UsageError("Simpson rule needs an odd node count")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def _lp_slice_simpson(b: CoefficientField, p: float, t: float, nodes: int) -> float:
    c, R = _spatial_box(b)
    n = nodes | 1
    axis = np.linspace(-R, R, n)
    w1 = _simpson_weights(n, 2 * R / (n - 1))
    pts = np.stack(np.meshgrid(*[c[j] + axis for j in range(b.d)], indexing="ij"), axis=-1).reshape(-1, b.d)
    ww = w1
    for _ in range(b.d - 1):
        ww = np.multiply.outer(ww, w1)
    vals, _ = _eval_masked(b, "drift", t, pts)
    return float(np.sum(ww.reshape(-1) * np.sum(vals * vals, axis=1) ** (p / 2)))


def threshold_split(b: CoefficientField, lam: Callable, horizon=(0.0, 1.0), n_t: int = 64,
                    n_spatial: int = 4096, seed: int = 0) -> DriftSplit:
    """Split ``b`` at a given threshold function; b_tilde is a max over a spatial sample."""
    lam_fn = lam

    def m_fn(t, x):
        v = b.drift_fn(t, x)
        keep = np.sqrt(np.sum(v * v, axis=1)) >= np.asarray(lam_fn(t), dtype=float)
        return np.where(keep[:, None], v, 0.0)

    def b_fn(t, x):
        v = b.drift_fn(t, x)
        keep = np.sqrt(np.sum(v * v, axis=1)) < np.asarray(lam_fn(t), dtype=float)
        return np.where(keep[:, None], v, 0.0)

    b_M = replace_drift(b, m_fn, name=f"{b.name}_M")
    b_B = replace_drift(b, b_fn, name=f"{b.name}_B", singular_fn=None, singular_description="",
                        time_dependent=True)
    t0, T = horizon
    edges = np.linspace(t0, T, n_t + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    rng = np.random.default_rng([seed, 104729])
    if math.isfinite(b.support_radius):
        c = np.zeros(b.d) if not b.support_center else np.asarray(b.support_center, dtype=float)
        pts = c + b.support_radius * (2 * rng.random((n_spatial, b.d)) - 1)
    else:
        pts = 4.0 * (2 * rng.random((n_spatial, b.d)) - 1)
    cells = np.empty(n_t)
    for i, s in enumerate(mids):
        vals = b_B.drift(s, pts, on_singular="zero")
        cells[i] = float(np.max(np.sqrt(np.sum(vals * vals, axis=1)))) if vals.size else 0.0
    return DriftSplit(lam=lam_fn, b_M=b_M, b_B=b_B, t_nodes=edges, b_tilde_cells=cells)


def split_drift(b: CoefficientField, p: float, N_hat: float, horizon=(0.0, 1.0), n_t: int = 64,
                spatial_nodes: int = 48, seed: int = 0) -> DriftSplit:
    """Threshold split with lambda(t) = N_hat (integral of |b(t,.)|^p)^(1/(p-d)).

    Also evaluates the integral of lambda^2 over the horizon (Gauss-Legendre in t
    and x) and N_hat^2 times the integral of (integral of |b|^p)^(q/p), q = 2p/(p-d)
    (composite Simpson in t and x). The two must agree.
    """
    d = b.d
    if p <= d:
        raise UsageError("split needs p > d")
    if b.singular_fn is not None:
        raise QuadratureError("L_p slice integrals with p > d diverge at the singular set; mollify first")
    t0, T = horizon
    if T <= t0:
        raise UsageError("empty horizon")

    cache = {}

    def slice_gauss(t):
        key = float(t)
        if key not in cache:
            cache[key] = _lp_slice_gauss(b, p, key, spatial_nodes)
        return cache[key]

    def lam(t):
        t = np.asarray(t, dtype=float)
        uniq, inv = np.unique(t.reshape(-1), return_inverse=True)
        vals = np.array([N_hat * slice_gauss(s) ** (1.0 / (p - d)) for s in uniq])
        flat = vals[inv]
        return flat.reshape(t.shape) if t.ndim else float(flat[0])

    split = threshold_split(b, lam, horizon, n_t=n_t, seed=seed)
    xg, wg = np.polynomial.legendre.leggauss(24)
    tg = 0.5 * (T - t0) * xg + 0.5 * (T + t0)
    lhs = 0.5 * (T - t0) * float(np.sum(wg * np.asarray(lam(tg)) ** 2))
    q = 2.0 * p / (p - d)
    n_s = 65
    ts = np.linspace(t0, T, n_s)
    ws = _simpson_weights(n_s, (T - t0) / (n_s - 1))
    rhs_vals = np.array([_lp_slice_simpson(b, p, s, 2 * spatial_nodes + 1) for s in ts])
    rhs = N_hat**2 * float(np.sum(ws * rhs_vals ** (q / p)))
    split.p = p
    split.N_hat = N_hat
    split.lambda_sq_integral = lhs
    split.rhs_integral = rhs
    return split


# -- certification -----------------------------------------------------------


@dataclass
class CertificationReport:
    certificates: list
    passed: bool

    def to_json(self) -> list:
        return [c.to_json() for c in self.certificates]

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def certify_assumption(field: CoefficientField, theta: float, b_hat: float, r_a: float, r_b: float,
                       p_b: float, sampler: SamplerSpec = SamplerSpec(), split_p: Optional[float] = None,
                       N_hat: float = 1.0, horizon=(0.0, 1.0)) -> CertificationReport:
    """Check the oscillation, Morrey and bounded-part clauses on a sampled probe set."""
    certs = []
    vmo_best = None
    for rho in _dyadic_radii(r_a, max(1, min(sampler.n_radii, 4))):
        c = vmo_modulus(field, rho, sampler)
        if vmo_best is None or c.value > vmo_best.value:
            vmo_best = c
    vmo_best.quantity = f"vmo_modulus(rho<={r_a:g})"
    vmo_best.threshold = theta
    vmo_best.passed = bool(vmo_best.value <= theta)
    certs.append(vmo_best)

    m = morrey_constant(field, p_b, r_b, sampler)
    m.threshold = b_hat
    m.passed = bool(m.value <= b_hat)
    certs.append(m)

    if split_p is not None:
        split = split_drift(field, split_p, N_hat, horizon)
        norm = split.b_B_norm
    else:
        norm = 0.0  # trivial split b_M = b
    certs.append(
        MorreyCertificate(
            quantity="bounded_part_norm",
            value=float(norm),
            argmax={"t": None, "x": None, "rho": None},
            threshold=None,
            passed=bool(math.isfinite(norm)),
        )
    )
    return CertificationReport(certs, all(c.passed for c in certs))
