"""Mollification of coefficient fields, time truncation of the diffusion, and ellipticity checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import FieldDefectError, UsageError
from .fields import CoefficientField

KERNELS = ("bump", "bump2")


def _profile(kind: str, s2: np.ndarray) -> np.ndarray:
    """Unnormalized radial kernel profile as a function of |y|^2 on the unit ball."""
    out = np.zeros_like(s2)
    inside = s2 < 1.0
    if kind == "bump":
        out[inside] = np.exp(-1.0 / (1.0 - s2[inside]))
    elif kind == "bump2":
        out[inside] = np.exp(-1.0 / (1.0 - s2[inside]) ** 2)
    else:
        raise UsageError(f"kernel must be one of {KERNELS}")
    return out


@dataclass(frozen=True)
class KernelRule:
    """Tensor Gauss-Legendre nodes on the unit cube, weighted by the kernel and normalized."""

    offsets: np.ndarray  # (K, dim) points in the unit ball
    weights: np.ndarray  # (K,), sums to one

    @classmethod
    def build(cls, dim: int, nodes: int = 16, kind: str = "bump") -> "KernelRule":
        if dim == 0:
            return cls(np.zeros((1, 0)), np.ones(1))
        x, w = np.polynomial.legendre.leggauss(nodes)
        grids = np.meshgrid(*([x] * dim), indexing="ij")
        pts = np.stack(grids, axis=-1).reshape(-1, dim)
        ww = w
        for _ in range(dim - 1):
            ww = np.multiply.outer(ww, w)
        ww = ww.reshape(-1) * _profile(kind, np.sum(pts * pts, axis=1))
        keep = ww > 0
        ww = ww[keep]
        return cls(pts[keep], ww / ww.sum())


class _Convolver:
    """Evaluates (f * kernel_eps)(t, x) by the kernel rule; eps = 1/n."""

    def __init__(self, fn, d: int, n: float, space_rule: KernelRule, time_rule: Optional[KernelRule],
                 chunk: int = 1 << 18):
        self.fn = fn
        self.d = d
        self.eps = 1.0 / n
        self.space = space_rule
        self.time = time_rule
        self.chunk = chunk

    def __call__(self, t, x):
        N = x.shape[0]
        sx = self.space.offsets * self.eps
        sw = self.space.weights
        if self.time is None:
            tt = np.zeros(1)
            tw = np.ones(1)
        else:
            tt = self.time.offsets[:, 0] * self.eps
            tw = self.time.weights
        Ks, Kt = sw.size, tw.size
        out = None
        step = max(1, self.chunk // (Ks * Kt))
        for lo in range(0, N, step):
            hi = min(N, lo + step)
            n = hi - lo
            # shifted points: x - eps*y, t - eps*s
            xp = (x[lo:hi, None, None, :] - sx[None, None, :, :])
            xp = np.broadcast_to(xp, (n, Kt, Ks, self.d)).reshape(-1, self.d)
            tp = np.broadcast_to((t[lo:hi, None, None] - tt[None, :, None]), (n, Kt, Ks)).reshape(-1)
            vals = self.fn(tp, xp)
            vals = vals.reshape((n, Kt, Ks) + vals.shape[1:])
            w = (tw[:, None] * sw[None, :])
            res = np.tensordot(vals, w, axes=([1, 2], [0, 1])) if vals.ndim > 3 else np.einsum("nts,ts->n", vals, w)
            if out is None:
                out = np.empty((N,) + res.shape[1:])
            out[lo:hi] = res
        return out


def _safe(fn, field: CoefficientField):
    """Evaluator that zeroes the (measure-zero) singular set, as the integral ignores it."""
    if field.singular_fn is None:
        return fn

    def wrapped(t, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.asarray(fn(t, x), dtype=float)
        mask = field.singular_fn(t, x)
        if mask.any():
            v = v.copy()
            v[mask] = 0.0
        return v

    return wrapped


def mollify(field: CoefficientField, n: float, nodes: int = 16, kernel: str = "bump",
            time_nodes: Optional[int] = None) -> CoefficientField:
    """Convolve sigma with eta_{1/n} in x and b with xi_{1/n}(t) eta_{1/n}(x).

    The drift is mollified in x only when the field does not depend on t.
    """
    if n < 1:
        raise UsageError("mollification index must be >= 1")
    d = field.d
    space_rule = KernelRule.build(d, nodes, kernel)
    time_rule = KernelRule.build(1, time_nodes or nodes, kernel) if field.time_dependent else None
    sig = field.sigma_fn
    if not field.sigma_constant_in_x:
        sig = _Convolver(_safe(field.sigma_fn, field), d, n, space_rule, None)
    drift = _Convolver(_safe(field.drift_fn, field), d, n, space_rule, time_rule)
    meta = dict(field.meta)
    meta.update({"mollified_from": field.name, "mollify_n": n, "kernel": kernel})
    return replace(
        field,
        sigma_fn=sig,
        drift_fn=drift,
        sigma_jac_fn=None if not field.sigma_constant_in_x else field.sigma_jac_fn,
        drift_jac_fn=None,
        singular_fn=None,
        singular_description="",
        name=f"{field.name}*eta_{n:g}",
        support_radius=field.support_radius + 1.0 / n,
        meta=meta,
    )


def select_m(n: int, delta: float, N_d: float = 1.0) -> int:
    """Largest integer m with N_d m / n <= sqrt(delta)/4; 0 when m = 1 already fails."""
    if not (0.0 < delta <= 1.0):
        raise UsageError("delta must lie in (0, 1]")
    if N_d <= 0 or n < 1:
        raise UsageError("need N_d > 0 and n >= 1")
    bound = math.sqrt(delta) / 4.0
    m = int(math.floor(bound * n / N_d))
    # float floor can be off by one at exact boundaries
    while m > 0 and N_d * m / n > bound:
        m -= 1
    while N_d * (m + 1) / n <= bound:
        m += 1
    return max(m, 0)


def default_kappa(d: int, d1: int) -> np.ndarray:
    k = np.zeros((d, d1))
    k[:, :d] = np.eye(d)
    return k


@dataclass
class MollifiedFamily:
    base: CoefficientField
    n: float
    m: int
    kappa: np.ndarray
    kernel: str = "bump"
    nodes: int = 16

    def __post_init__(self):
        k = np.asarray(self.kappa, dtype=float)
        if k.shape != (self.base.d, self.base.d1):
            raise UsageError("kappa must be d x d1")
        if np.max(np.abs(k @ k.T - np.eye(self.base.d))) > 1e-12:
            raise UsageError("kappa kappa^T must equal the identity")
        self.kappa = k

    @classmethod
    def build(cls, base: CoefficientField, n: float, m: Optional[int] = None, N_d: float = 1.0,
              kappa=None, kernel: str = "bump", nodes: int = 16,
              delta: Optional[float] = None) -> "MollifiedFamily":
        if m is None:
            m = select_m(int(n), base.delta if delta is None else delta, N_d)
        kap = default_kappa(base.d, base.d1) if kappa is None else kappa
        return cls(base, n, m, kap, kernel, nodes)

    def gamma_m(self) -> Optional[Callable]:
        """Indicator of {t : bounded-gradient sup <= m}; None when the field declares no split."""
        sup = self.base.meta.get("dsigma_b_sup")
        if self.m < 0:
            return lambda t: np.zeros(np.shape(t), dtype=bool)
        if sup is None:
            return None
        m = self.m
        return lambda t: np.asarray(sup(np.asarray(t, dtype=float))) <= m

    def mollified(self) -> CoefficientField:
        return mollify(self.base, self.n, self.nodes, self.kernel)


@dataclass
class Truncation:
    field: CoefficientField
    identity: bool  # true when no gradient split was declared and nothing was truncated
    note: str = ""


def truncate_sigma(family: MollifiedFamily) -> Truncation:
    """sigma_m = sigma^(n) on Gamma_m and kappa off it."""
    moll = family.mollified()
    gam = family.gamma_m()
    if gam is None:
        return Truncation(moll, True, "no bounded-gradient split declared; truncation is the identity")
    kap = family.kappa
    inner = moll.sigma_fn

    def sigma_fn(t, x):
        keep = gam(t)
        out = np.empty((x.shape[0],) + kap.shape)
        out[~keep] = kap
        if keep.any():
            out[keep] = inner(t[keep], x[keep])
        return out

    tr = replace(
        moll,
        sigma_fn=sigma_fn,
        sigma_jac_fn=None,
        sigma_constant_in_x=False if family.m >= 0 else True,
        time_dependent=moll.time_dependent or family.m >= 0,
        name=f"{moll.name}|m={family.m}",
    )
    return Truncation(tr, False)


@dataclass
class EllipticityReport:
    min_eig: float
    max_eig: float
    lower: float
    upper: float
    samples: int

    @property
    def passed(self) -> bool:
        return self.lower <= self.min_eig and self.max_eig <= self.upper

    def to_json(self) -> dict:
        return {
            "quantity": "ellipticity",
            "value": [self.min_eig, self.max_eig],
            "window": [self.lower, self.upper],
            "samples": self.samples,
            "pass": self.passed,
        }


def ellipticity_check(field: CoefficientField, region=None, samples: int = 20000, seed: int = 0,
                      bounds: Optional[tuple] = None, times=(0.0,)) -> EllipticityReport:
    """Sampled eigenvalue range of sigma sigma^T against [delta/4, 4/delta] (or ``bounds``).

    ``region`` is (center, halfwidth) of a cube; points on the singular set are skipped.
    """
    d = field.d
    c, h = (np.zeros(d), 0.5) if region is None else (np.asarray(region[0], dtype=float), float(region[1]))
    rng = np.random.default_rng([seed, 31337])
    pts = c + h * (2 * rng.random((samples, d)) - 1)
    lo, hi = np.inf, -np.inf
    for t in times:
        A = field.diffusion(t, pts, on_singular="nan")
        ok = np.all(np.isfinite(A.reshape(samples, -1)), axis=1)
        ev = np.linalg.eigvalsh(A[ok])
        if not np.all(np.isfinite(ev)):
            raise FieldDefectError("non-finite eigenvalue")
        lo = min(lo, float(ev.min()))
        hi = max(hi, float(ev.max()))
    if bounds is None:
        bounds = (field.delta / 4.0, 4.0 / field.delta)
    return EllipticityReport(lo, hi, float(bounds[0]), float(bounds[1]), samples * len(times))
