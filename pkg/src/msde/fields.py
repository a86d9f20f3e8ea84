"""Coefficient fields: the diffusion matrix and drift of an Itô equation.

Every evaluator is vectorized: it takes times ``t`` of shape (N,) and
positions ``x`` of shape (N, d) and returns (N, d, d1) for the diffusion
matrix and (N, d) for the drift.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import FieldDefectError, GridFormatError, SingularityError, UsageError

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _bump(s: np.ndarray) -> np.ndarray:
    """exp(1 - 1/(1 - s^2)) on |s| < 1, zero elsewhere; equals 1 at s = 0."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def _bump_deriv(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - si**2)) * (-2.0 * si / (1.0 - si**2) ** 2)
    return out


@dataclass(frozen=True, eq=False)
class CoefficientField:
    d: int
    d1: int
    sigma_fn: Evaluator
    drift_fn: Evaluator
    delta: float = 1.0
    kind: str = "analytic"
    name: str = ""
    # returns a bool mask of points where evaluation is undefined
    singular_fn: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    singular_description: str = ""
    landmarks: tuple = ()
    time_dependent: bool = False
    sigma_constant_in_x: bool = False
    drift_jac_fn: Optional[Evaluator] = None
    sigma_jac_fn: Optional[Evaluator] = None
    support_radius: float = math.inf
    support_center: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.d < 1:
            raise UsageError("dimension must be >= 1")
        if self.d1 < self.d:
            raise UsageError("noise dimension must be >= d")
        if not (0.0 < self.delta <= 1.0):
            raise UsageError("delta must lie in (0, 1]")

    # -- point handling -------------------------------------------------
    def _prep(self, t, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.d:
            raise UsageError(f"expected points of dimension {self.d}, got {x2.shape[1]}")
        t2 = np.broadcast_to(np.asarray(t, dtype=float), (x2.shape[0],)).astype(float)
        return t2, x2, single

    def singular(self, t, x) -> np.ndarray:
        t2, x2, _ = self._prep(t, x)
        if self.singular_fn is None:
            return np.zeros(x2.shape[0], dtype=bool)
        return np.asarray(self.singular_fn(t2, x2), dtype=bool)

    def _evaluate(self, fn, t, x, on_singular, what):
        t2, x2, single = self._prep(t, x)
        mask = self.singular(t2, x2)
        if mask.any() and on_singular == "raise":
            i = int(np.argmax(mask))
            raise SingularityError(
                f"{self.name or 'field'} {what} undefined at t={t2[i]!r}, x={x2[i].tolist()!r}"
            )
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            val = np.array(fn(t2, x2), dtype=float)
        if mask.any():
            val[mask] = 0.0 if on_singular == "zero" else np.nan
        ok = ~mask
        if not np.all(np.isfinite(val[ok])):
            bad = np.argwhere(~np.isfinite(val.reshape(val.shape[0], -1)).all(axis=1) & ok)[0, 0]
            raise FieldDefectError(
                f"{self.name or 'field'} {what} non-finite at t={t2[bad]!r}, x={x2[bad].tolist()!r}"
            )
        return val[0] if single else val

    def sigma(self, t, x, on_singular: str = "raise") -> np.ndarray:
        return self._evaluate(self.sigma_fn, t, x, on_singular, "sigma")

    def drift(self, t, x, on_singular: str = "raise") -> np.ndarray:
        return self._evaluate(self.drift_fn, t, x, on_singular, "drift")

    def diffusion(self, t, x, on_singular: str = "raise") -> np.ndarray:
        s = self.sigma(t, x, on_singular)
        return s @ np.swapaxes(s, -1, -2)

    def drift_jac(self, t, x, h: float = 1e-5) -> np.ndarray:
        """D_j b^i as (N, d, d); central differences when no closed form is attached."""
        if self.drift_jac_fn is not None:
            return self._evaluate(self.drift_jac_fn, t, x, "raise", "drift jacobian")
        return _central_jac(self.drift, t, x, self.d, h)

    def sigma_jac(self, t, x, h: float = 1e-5) -> np.ndarray:
        """D_j sigma^{ik} as (N, d, d1, d)."""
        if self.sigma_constant_in_x:
            t2, x2, single = self._prep(t, x)
            z = np.zeros((x2.shape[0], self.d, self.d1, self.d))
            return z[0] if single else z
        if self.sigma_jac_fn is not None:
            return self._evaluate(self.sigma_jac_fn, t, x, "raise", "sigma jacobian")
        return _central_jac(self.sigma, t, x, self.d, h)

    def with_drift(self, drift_fn: Evaluator, **changes) -> "CoefficientField":
        changes.setdefault("drift_jac_fn", None)
        changes.setdefault("support_radius", math.inf)
        return replace(self, drift_fn=drift_fn, **changes)

    def with_sigma(self, sigma_fn: Evaluator, **changes) -> "CoefficientField":
        changes.setdefault("sigma_jac_fn", None)
        return replace(self, sigma_fn=sigma_fn, **changes)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "d": self.d,
            "d1": self.d1,
            "delta": self.delta,
            "kind": self.kind,
            "singular_set": self.singular_description or None,
        }


def _central_jac(fn, t, x, d, h):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        cols.append((fn(t, x2 + e) - fn(t, x2 - e)) / (2.0 * h))
    jac = np.stack(cols, axis=-1)
    return jac[0] if single else jac


def _radius(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(x * x, axis=1))


# -- elementary fields --------------------------------------------------


def constant_field(d: int, sigma=None, drift=None, name: str = "constant") -> CoefficientField:
    sig = np.eye(d) if sigma is None else np.atleast_2d(np.asarray(sigma, dtype=float))
    b = np.zeros(d) if drift is None else np.asarray(drift, dtype=float).reshape(d)
    if sig.shape[0] != d:
        raise UsageError("sigma must have d rows")
    ev = np.linalg.eigvalsh(sig @ sig.T)
    delta = float(min(1.0, ev.min(), 1.0 / ev.max())) if ev.min() > 0 else 1.0

    def sigma_fn(t, x):
        return np.broadcast_to(sig, (x.shape[0],) + sig.shape).copy()

    def drift_fn(t, x):
        return np.broadcast_to(b, (x.shape[0], d)).copy()

    return CoefficientField(
        d=d,
        d1=sig.shape[1],
        sigma_fn=sigma_fn,
        drift_fn=drift_fn,
        delta=delta,
        name=name,
        sigma_constant_in_x=True,
        drift_jac_fn=lambda t, x: np.zeros((x.shape[0], d, d)),
        # a zero drift has empty support
        support_radius=0.0 if not np.any(b) else math.inf,
        meta={"dsigma_b_sup": lambda t: np.zeros_like(np.asarray(t, dtype=float))},
    )


def brownian(d: int) -> CoefficientField:
    return constant_field(d, name="bm")


def ou_field(d: int = 1, rate: float = 1.0, noise: float = 1.0) -> CoefficientField:
    """dx = -rate * x dt + noise * dw."""
    base = constant_field(d, sigma=noise * np.eye(d), name="ou")
    jac = -rate * np.eye(d)
    return base.with_drift(
        lambda t, x: -rate * x,
        drift_jac_fn=lambda t, x: np.broadcast_to(jac, (x.shape[0], d, d)).copy(),
    )


def build_bump_drift(d: int, amplitude: float = 1.0, radius: float = 1.0,
                     time_modulation: float = 0.5) -> CoefficientField:
    """Smooth compactly supported drift A (1 + m sin(2 pi t)) bump(|x|/R) e1."""
    e1 = np.zeros(d)
    e1[0] = 1.0

    def drift_fn(t, x):
        mag = amplitude * (1.0 + time_modulation * np.sin(2 * np.pi * t)) * _bump(_radius(x) / radius)
        return mag[:, None] * e1

    return replace(
        brownian(d),
        drift_fn=drift_fn,
        drift_jac_fn=None,
        name="bump",
        time_dependent=time_modulation != 0.0,
        support_radius=radius,
        meta={"amplitude": amplitude},
    )


# -- diffusion with a vanishing-mean-oscillation singularity ------------


def build_sigma_vmo(zeta_radius: float = 0.5, amplitude: float = 1.0, d: int = 2,
                    split_radius: float = 0.05) -> CoefficientField:
    """sigma = 2 I + 1{x != 0} zeta(x) sin(ln|ln|x||), zeta = amplitude * bump(|x|/R) I / sqrt(d).

    The I/sqrt(d) factor keeps the Frobenius norm of zeta at most one.
    ``split_radius`` separates the unbounded part of the gradient (|x| below it)
    from the bounded part used for time truncation.
    """
    if not (0.0 <= amplitude <= 1.0):
        raise UsageError("amplitude must lie in [0, 1]")
    if not (0.0 < zeta_radius <= 0.5):
        raise UsageError("zeta_radius must lie in (0, 1/2]")
    R = float(zeta_radius)
    scale = amplitude / math.sqrt(d)
    eye = np.eye(d)

    def scalar(x):
        r = _radius(x)
        out = np.zeros(x.shape[0])
        inside = (r > 0) & (r < R)
        ri = r[inside]
        out[inside] = scale * _bump(ri / R) * np.sin(np.log(np.abs(np.log(ri))))
        return out

    def scalar_grad(x):
        r = _radius(x)
        g = np.zeros_like(x)
        inside = (r > 0) & (r < R)
        ri = r[inside]
        lnr = np.log(ri)
        osc = np.sin(np.log(np.abs(lnr)))
        dosc = np.cos(np.log(np.abs(lnr))) / (ri * lnr)
        dr = scale * (_bump_deriv(ri / R) / R * osc + _bump(ri / R) * dosc)
        g[inside] = dr[:, None] * x[inside] / ri[:, None]
        return g

    def sigma_fn(t, x):
        return (2.0 + scalar(x))[:, None, None] * eye

    def sigma_jac_fn(t, x):
        g = scalar_grad(x)
        return eye[None, :, :, None] * g[:, None, None, :]

    # bounded gradient part: |D sigma| restricted to split_radius <= |x| < R
    rr = np.linspace(split_radius, R, 4001)[:-1]
    probe = np.zeros((rr.size, d))
    probe[:, 0] = rr
    grad_sup = float(np.max(np.abs(scalar_grad(probe)[:, 0])) * math.sqrt(d)) if rr.size else 0.0

    lo = (2.0 - scale) ** 2
    hi = (2.0 + scale) ** 2
    return CoefficientField(
        d=d,
        d1=d,
        sigma_fn=sigma_fn,
        drift_fn=lambda t, x: np.zeros_like(x),
        delta=float(min(1.0, lo, 1.0 / hi)),
        name="sigma_vmo",
        landmarks=(np.zeros(d),),
        sigma_jac_fn=sigma_jac_fn,
        drift_jac_fn=lambda t, x: np.zeros((x.shape[0], d, d)),
        meta={
            "zeta_radius": R,
            "amplitude": amplitude,
            "eig_window": (lo, hi),
            "dsigma_b_sup": lambda t, v=grad_sup: np.full(np.shape(t), v, dtype=float),
        },
    )


# -- singular drifts ----------------------------------------------------

_DIRECTIONS = ("radial_in", "radial_out")


def _direction_fn(direction, d):
    """Unit vector field; radial choices fall back to -/+ e1 at the origin."""
    if isinstance(direction, str):
        if direction not in _DIRECTIONS:
            raise UsageError(f"direction must be one of {_DIRECTIONS} or a unit vector")
        sign = -1.0 if direction == "radial_in" else 1.0
        e1 = np.zeros(d)
        e1[0] = 1.0

        def unit(x):
            r = _radius(x)
            u = np.empty_like(x)
            pos = r > 0
            u[pos] = x[pos] / r[pos, None]
            u[~pos] = e1
            return sign * u

        return unit, sign
    v = np.asarray(direction, dtype=float).reshape(d)
    nv = np.linalg.norm(v)
    if not math.isclose(nv, 1.0, rel_tol=1e-9):
        raise UsageError("fixed direction must be a unit vector")
    return (lambda x: np.broadcast_to(v, x.shape).copy()), None


def build_drift_inverse(gamma: float, d: int, direction="radial_in") -> CoefficientField:
    """|b| = gamma/|x| on 0 < |x| < 1, b = 0 outside the unit ball."""
    if gamma < 0:
        raise UsageError("gamma must be >= 0")
    unit, sign = _direction_fn(direction, d)
    eye = np.eye(d)

    def drift_fn(t, x):
        r = _radius(x)
        mag = np.where((r > 0) & (r < 1.0), gamma / np.where(r > 0, r, 1.0), 0.0)
        return mag[:, None] * unit(x)

    def drift_jac_fn(t, x):
        r = _radius(x)
        inside = ((r > 0) & (r < 1.0)).astype(float)
        rs = np.where(r > 0, r, 1.0)
        if sign is not None:
            # b = sign * gamma * x / |x|^2
            outer = x[:, :, None] * x[:, None, :]
            jac = sign * gamma * (eye / rs[:, None, None] ** 2 - 2.0 * outer / rs[:, None, None] ** 4)
        else:
            u = unit(x)
            jac = -gamma * u[:, :, None] * x[:, None, :] / rs[:, None, None] ** 3
        return jac * inside[:, None, None]

    base = brownian(d)
    return replace(
        base,
        drift_fn=drift_fn,
        drift_jac_fn=drift_jac_fn,
        name="inverse",
        singular_fn=lambda t, x: _radius(x) == 0.0,
        singular_description="x = 0",
        landmarks=(np.zeros(d),),
        support_radius=1.0,
        meta={"gamma": gamma, "direction": direction if isinstance(direction, str) else list(direction)},
    )


def build_drift_parabolic(gamma: float, d: int, direction="radial_in") -> CoefficientField:
    """|b| = gamma / (|x| + sqrt|t|) on |x| < 1, |t| < 1; zero outside the unit cylinder."""
    if gamma < 0:
        raise UsageError("gamma must be >= 0")
    unit, _ = _direction_fn(direction, d)

    def drift_fn(t, x):
        r = _radius(x)
        den = r + np.sqrt(np.abs(t))
        inside = (r < 1.0) & (np.abs(t) < 1.0) & (den > 0)
        mag = np.where(inside, gamma / np.where(den > 0, den, 1.0), 0.0)
        return mag[:, None] * unit(x)

    base = brownian(d)
    return replace(
        base,
        drift_fn=drift_fn,
        drift_jac_fn=None,
        name="parabolic",
        singular_fn=lambda t, x: (_radius(x) == 0.0) & (t == 0.0),
        singular_description="(t, x) = (0, 0)",
        landmarks=(np.zeros(d),),
        time_dependent=True,
        support_radius=1.0,
        meta={"gamma": gamma},
    )


def fractal_radii(p: float, d: int, n_max: int) -> np.ndarray:
    """Radii with sum r_n^(d-p) = 1/2 whose r_n^(d-q) sums diverge for every q > p.

    rho_n = (ln 2 / 2)(1/ln(n+1) - 1/ln(n+2)); the last term absorbs the tail.
    """
    if n_max < 1:
        raise UsageError("n_max must be >= 1")
    n = np.arange(1, n_max + 1, dtype=float)
    c = math.log(2.0) / 2.0
    rho = c * (1.0 / np.log(n + 1.0) - 1.0 / np.log(n + 2.0))
    rho[-1] += c / math.log(n_max + 2.0)
    return rho ** (1.0 / (d - p))


def build_fractal_drift(p: float, d: int, radii: Optional[Sequence[float]] = None,
                        n_max: int = 20, direction="radial_in") -> CoefficientField:
    """Superposition of rescaled copies of |x|^-1 1{|x|<1} on disjoint balls along e1."""
    if not (d - 1 <= p < d):
        raise UsageError("p must lie in [d-1, d)")
    r = fractal_radii(p, d, n_max) if radii is None else np.asarray(radii, dtype=float)
    if np.any(r <= 0):
        raise UsageError("radii must be positive")
    rho = r ** (d - p)
    if abs(rho.sum() - 0.5) > 1e-12:
        raise UsageError(f"radii violate the normalization: sum r^(d-p) = {rho.sum():.15g}")
    xs = 1.0 - 2.0 * np.concatenate([[0.0], np.cumsum(rho)])
    centers = 0.5 * (xs[1:] + xs[:-1])
    order = np.argsort(centers)
    cs, rs = centers[order], r[order]
    gaps = (cs[1:] - cs[:-1]) - (rs[1:] + rs[:-1])
    if np.any(gaps < -1e-12):
        raise UsageError("supports overlap")
    unit, _ = _direction_fn(direction, d)

    def locate(x):
        # index of the ball containing x, or -1; supports are disjoint so at most one
        k = np.searchsorted(cs, x[:, 0])
        idx = np.full(x.shape[0], -1)
        for cand in (k - 1, k):
            ok = (cand >= 0) & (cand < cs.size)
            cc = np.clip(cand, 0, cs.size - 1)
            y = x.copy()
            y[:, 0] -= cs[cc]
            inside = ok & (_radius(y) < rs[cc])
            idx = np.where(inside, cc, idx)
        return idx

    def drift_fn(t, x):
        idx = locate(x)
        out = np.zeros_like(x)
        hit = idx >= 0
        if hit.any():
            y = x[hit].copy()
            y[:, 0] -= cs[idx[hit]]
            ry = _radius(y)
            out[hit] = (1.0 / np.where(ry > 0, ry, 1.0))[:, None] * unit(y)
        return out

    def singular_fn(t, x):
        idx = locate(x)
        y = x.copy()
        y[:, 0] -= cs[np.clip(idx, 0, cs.size - 1)]
        return (idx >= 0) & (_radius(y) == 0.0)

    marks = []
    for c in centers:
        v = np.zeros(d)
        v[0] = c
        marks.append(v)
    base = brownian(d)
    return replace(
        base,
        drift_fn=drift_fn,
        drift_jac_fn=None,
        name="fractal",
        singular_fn=singular_fn,
        singular_description="ball centers c_n e1",
        landmarks=tuple(marks),
        support_radius=1.0,
        meta={"p": p, "radii": r.tolist(), "centers": centers.tolist()},
    )


def fractal_partial_integral(p: float, d: int, q: float, radii: Sequence[float]) -> np.ndarray:
    """Running sums of the integral of b^q over the fractal drift's support (finite for q < d)."""
    if q >= d:
        return np.full(len(radii), math.inf)
    r = np.asarray(radii, dtype=float)
    sphere = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    return np.cumsum(r ** (d - q) * sphere / (d - q))


def build_counterexample_drift(d: int) -> CoefficientField:
    """b(x) = -(d/2) x / |x|^2 on all of R^d."""
    if d < 2:
        raise UsageError("requires d >= 2")
    eye = np.eye(d)
    half = d / 2.0

    def drift_fn(t, x):
        r2 = np.sum(x * x, axis=1)
        return -half * x / np.where(r2 > 0, r2, 1.0)[:, None]

    def drift_jac_fn(t, x):
        r2 = np.sum(x * x, axis=1)[:, None, None]
        outer = x[:, :, None] * x[:, None, :]
        return -half * (eye / r2 - 2.0 * outer / r2**2)

    return replace(
        brownian(d),
        drift_fn=drift_fn,
        drift_jac_fn=drift_jac_fn,
        name="counterexample",
        singular_fn=lambda t, x: _radius(x) == 0.0,
        singular_description="x = 0",
        landmarks=(np.zeros(d),),
        support_radius=math.inf,
        meta={},
    )


def replace_drift(field: CoefficientField, drift_fn: Evaluator, **changes) -> CoefficientField:
    """Same diffusion, new drift; the closed-form drift Jacobian is dropped."""
    changes.setdefault("drift_jac_fn", None)
    changes.setdefault("support_radius", math.inf)
    return replace(field, drift_fn=drift_fn, **changes)


def combine(sigma_from: CoefficientField, drift_from: CoefficientField, name: str = "") -> CoefficientField:
    """Diffusion of one field with the drift of another."""
    if sigma_from.d != drift_from.d:
        raise UsageError("dimension mismatch")
    s_sing, b_sing = sigma_from.singular_fn, drift_from.singular_fn
    if s_sing is None:
        sing = b_sing
    elif b_sing is None:
        sing = s_sing
    else:
        sing = lambda t, x: s_sing(t, x) | b_sing(t, x)  # noqa: E731
    meta = dict(drift_from.meta)
    meta.update(sigma_from.meta)
    return CoefficientField(
        d=sigma_from.d,
        d1=sigma_from.d1,
        sigma_fn=sigma_from.sigma_fn,
        drift_fn=drift_from.drift_fn,
        delta=sigma_from.delta,
        kind="grid" if "grid" in (sigma_from.kind, drift_from.kind) else "analytic",
        name=name or f"{sigma_from.name}+{drift_from.name}",
        singular_fn=sing,
        singular_description="; ".join(
            s for s in (sigma_from.singular_description, drift_from.singular_description) if s
        ),
        landmarks=tuple(sigma_from.landmarks) + tuple(drift_from.landmarks),
        time_dependent=sigma_from.time_dependent or drift_from.time_dependent,
        sigma_constant_in_x=sigma_from.sigma_constant_in_x,
        drift_jac_fn=drift_from.drift_jac_fn,
        sigma_jac_fn=sigma_from.sigma_jac_fn,
        support_radius=drift_from.support_radius,
        support_center=drift_from.support_center,
        meta=meta,
    )


# -- grid-sampled fields --------------------------------------------------

GRID_MAGIC = b"MSDEGRID"
GRID_VERSION = 1
_INTERPOLATIONS = ("nearest", "multilinear")


@dataclass(frozen=True, eq=False)
class GridField:
    """Samples at cell centers of a (t, x_1, ..., x_d) box, row-major with t slowest."""

    bounds: np.ndarray  # (naxes, 2)
    shape: tuple
    values: np.ndarray  # (prod(shape), arity)
    interpolation: str = "multilinear"

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float)
        object.__setattr__(self, "bounds", b)
        if b.ndim != 2 or b.shape[1] != 2 or b.shape[0] != len(self.shape):
            raise GridFormatError("bounds must be (naxes, 2) matching shape")
        if np.any(b[:, 0] >= b[:, 1]):
            raise GridFormatError("each axis needs lo < hi")
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != int(np.prod(self.shape)):
            raise GridFormatError(
                f"shape/value-count mismatch: {int(np.prod(self.shape))} cells, {v.shape[0]} rows"
            )
        if not np.all(np.isfinite(v)):
            raise GridFormatError("non-finite grid value")
        object.__setattr__(self, "values", v)
        if self.interpolation not in _INTERPOLATIONS:
            raise UsageError(f"interpolation must be one of {_INTERPOLATIONS}")

    @property
    def naxes(self) -> int:
        return len(self.shape)

    @property
    def arity(self) -> int:
        return self.values.shape[1]

    def centers(self, axis: int) -> np.ndarray:
        lo, hi = self.bounds[axis]
        n = self.shape[axis]
        return lo + (np.arange(n) + 0.5) * (hi - lo) / n

    def evaluate(self, pts: np.ndarray) -> np.ndarray:
        """pts (N, naxes) -> (N, arity); outside the box the boundary value is used."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n_ax = self.naxes
        strides = np.cumprod((1,) + tuple(self.shape[::-1]))[:-1][::-1]
        lo_idx, fracs = [], []
        for a in range(n_ax):
            lo, hi = self.bounds[a]
            n = self.shape[a]
            s = (pts[:, a] - lo) * n / (hi - lo) - 0.5
            s = np.clip(s, 0.0, n - 1.0)
            if self.interpolation == "nearest":
                lo_idx.append(np.rint(s).astype(np.int64))
                fracs.append(np.zeros_like(s))
                continue
            # snap so that cell centers reproduce stored values exactly
            near = np.rint(s)
            s = np.where(np.abs(s - near) < 1e-9, near, s)
            i0 = np.minimum(np.floor(s).astype(np.int64), max(n - 2, 0))
            fracs.append(s - i0)
            lo_idx.append(i0)
        if self.interpolation == "nearest":
            flat = sum(lo_idx[a] * strides[a] for a in range(n_ax))
            return self.values[flat]
        out = np.zeros((pts.shape[0], self.arity))
        for corner in range(1 << n_ax):
            w = np.ones(pts.shape[0])
            flat = np.zeros(pts.shape[0], dtype=np.int64)
            for a in range(n_ax):
                bit = (corner >> a) & 1
                if self.shape[a] == 1:
                    if bit:
                        w = w * 0.0
                    idx = lo_idx[a]
                else:
                    idx = lo_idx[a] + bit
                    w = w * (fracs[a] if bit else 1.0 - fracs[a])
                flat = flat + idx * strides[a]
            nz = w != 0.0
            if nz.any():
                out[nz] += w[nz, None] * self.values[flat[nz]]
        return out

    def header(self) -> dict:
        return {
            "magic": GRID_MAGIC.decode(),
            "version": GRID_VERSION,
            "axes": [
                {"lo": float(self.bounds[a, 0]), "hi": float(self.bounds[a, 1]), "n": int(self.shape[a])}
                for a in range(self.naxes)
            ],
            "arity": self.arity,
        }


def save_grid(path: str, grid: GridField, extra: Optional[dict] = None) -> None:
    """Binary MSDEGRID file plus a ``.json`` sidecar; both written atomically."""
    buf = bytearray(GRID_MAGIC)
    buf += struct.pack("<HB", GRID_VERSION, grid.naxes)
    for a in range(grid.naxes):
        buf += struct.pack("<ddI", grid.bounds[a, 0], grid.bounds[a, 1], grid.shape[a])
    buf += struct.pack("<B", grid.arity)
    buf += np.ascontiguousarray(grid.values, dtype="<f8").tobytes()
    atomic_write(path, bytes(buf))
    side = grid.header()
    if extra:
        side.update(extra)
    atomic_write(path + ".json", json.dumps(side, indent=2).encode())


def read_grid(path: str, interpolation: str = "multilinear") -> GridField:
    with open(path, "rb") as fh:
        raw = fh.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise GridFormatError("truncated header")
        chunk = raw[pos : pos + n]
        pos += n
        return chunk

    if take(8) != GRID_MAGIC:
        raise GridFormatError("bad magic bytes")
    version, naxes = struct.unpack("<HB", take(3))
    if version != GRID_VERSION:
        raise GridFormatError(f"unsupported version {version}")
    if naxes < 1:
        raise GridFormatError("axis count must be >= 1")
    bounds, shape = [], []
    for _ in range(naxes):
        lo, hi, n = struct.unpack("<ddI", take(20))
        if n < 1:
            raise GridFormatError("axis with zero samples")
        bounds.append((lo, hi))
        shape.append(n)
    (arity,) = struct.unpack("<B", take(1))
    if arity < 1:
        raise GridFormatError("arity must be >= 1")
    payload = raw[pos:]
    expected = int(np.prod(shape)) * arity * 8
    if len(payload) != expected:
        raise GridFormatError(
            f"shape/value-count mismatch: header implies {expected} payload bytes, found {len(payload)}"
        )
    vals = np.frombuffer(payload, dtype="<f8").reshape(-1, arity).astype(float)
    return GridField(np.array(bounds), tuple(shape), vals, interpolation)


def sample_to_grid(field: CoefficientField, role: str, bounds, shape,
                   interpolation: str = "multilinear") -> GridField:
    """Evaluate ``field``'s drift or diffusion at the cell centers of a (t, x) box."""
    bounds = np.asarray(bounds, dtype=float)
    if bounds.shape[0] != field.d + 1:
        raise UsageError("bounds need one row for t and one per space axis")
    tmp = GridField(bounds, tuple(shape), np.zeros((int(np.prod(shape)), 1)), interpolation)
    axes = [tmp.centers(a) for a in range(len(shape))]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(shape))
    t, x = mesh[:, 0], mesh[:, 1:]
    if role == "drift":
        vals = field.drift(t, x)
    elif role == "sigma":
        vals = field.sigma(t, x).reshape(x.shape[0], -1)
    else:
        raise UsageError("role must be 'drift' or 'sigma'")
    return GridField(bounds, tuple(shape), vals, interpolation)


def grid_to_field(grid: GridField, role: str = "auto", d1: Optional[int] = None,
                  delta: Optional[float] = None, name: str = "grid") -> CoefficientField:
    d = grid.naxes - 1
    if d < 1:
        raise GridFormatError("grid needs a time axis and at least one space axis")
    if role == "auto":
        if grid.arity == d and d1 is None:
            role = "drift"
        elif grid.arity % d == 0:
            role = "sigma"
        else:
            raise GridFormatError(f"arity {grid.arity} fits neither a drift nor a diffusion in d={d}")
    time_dep = grid.shape[0] > 1

    def pts(t, x):
        return np.column_stack([t, x])

    if role == "drift":
        if grid.arity != d:
            raise GridFormatError(f"drift grid needs arity {d}, found {grid.arity}")
        base = brownian(d)
        return replace(
            base,
            drift_fn=lambda t, x: grid.evaluate(pts(t, x)),
            drift_jac_fn=None,
            kind="grid",
            name=name,
            support_radius=math.inf,
            time_dependent=time_dep,
            meta={"grid": grid.header()},
        )
    if role != "sigma":
        raise UsageError("role must be 'drift', 'sigma' or 'auto'")
    k = grid.arity // d if d1 is None else d1
    if grid.arity != d * k or k < d:
        raise GridFormatError(f"diffusion grid arity {grid.arity} incompatible with d={d}, d1={k}")
    if delta is None:
        mats = grid.values.reshape(-1, d, k)
        ev = np.linalg.eigvalsh(mats @ np.swapaxes(mats, 1, 2))
        lo, hi = float(ev.min()), float(ev.max())
        if lo <= 0:
            raise FieldDefectError("stored diffusion is degenerate at some cell")
        delta = min(1.0, lo, 1.0 / hi)
    return CoefficientField(
        d=d,
        d1=k,
        sigma_fn=lambda t, x: grid.evaluate(pts(t, x)).reshape(-1, d, k),
        drift_fn=lambda t, x: np.zeros_like(x),
        delta=delta,
        kind="grid",
        name=name,
        time_dependent=time_dep,
        meta={"grid": grid.header()},
    )


def load_grid_field(path: str, interpolation: str = "multilinear", role: str = "auto",
                    d1: Optional[int] = None, delta: Optional[float] = None) -> CoefficientField:
    grid = read_grid(path, interpolation)
    return grid_to_field(grid, role=role, d1=d1, delta=delta, name=os.path.basename(path))


def atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = os.path.join(directory, f".{os.path.basename(path)}.tmp{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


# -- named example fields ---------------------------------------------------

ZOO = ("zero", "bm", "constant", "ou", "bump", "inverse", "parabolic", "fractal", "counterexample",
       "sigma_vmo")


def zoo_field(name: str, d: int = 2, gamma: float = 0.1, drift=None, rate: float = 1.0,
              p: Optional[float] = None, n_max: int = 20, direction: str = "radial_in",
              amplitude: float = 1.0, zeta_radius: float = 0.5, radius: float = 1.0) -> CoefficientField:
    """Build a named example field; a path to an MSDEGRID file loads a grid field instead."""
    if name in ("zero", "bm"):
        return replace(brownian(d), name=name)
    if name == "constant":
        c = np.ones(d) if drift is None else np.asarray(drift, dtype=float)
        return constant_field(d, drift=c)
    if name == "ou":
        return ou_field(d, rate)
    if name == "bump":
        return build_bump_drift(d, amplitude, radius)
    if name == "inverse":
        return build_drift_inverse(gamma, d, direction)
    if name == "parabolic":
        return build_drift_parabolic(gamma, d, direction)
    if name == "fractal":
        return build_fractal_drift(d - 0.5 if p is None else p, d, None, n_max, direction)
    if name == "counterexample":
        return build_counterexample_drift(d)
    if name == "sigma_vmo":
        return build_sigma_vmo(zeta_radius, amplitude, d)
    if os.path.exists(name):
        return load_grid_field(name)
    raise UsageError(f"unknown field {name!r}; choose from {', '.join(ZOO)} or give an MSDEGRID path")
