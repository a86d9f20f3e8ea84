"""Euler scheme for the first-variation (derivative) flow along stored increments."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..errors import FieldDefectError, UsageError
from ..fields import CoefficientField
from .engine import MATERIALIZE_LIMIT_BYTES, PathEnsemble


def flow_chunk(field: CoefficientField, t0: float, dt: float, paths: np.ndarray, dw: np.ndarray,
               eta0: np.ndarray) -> np.ndarray:
    """Flow along given paths (n, S+1, d) and their increments (n, S, d1)."""
    n, S1, d = paths.shape
    eta = np.empty((n, S1, d))
    e = np.broadcast_to(eta0, (n, d)).copy()
    eta[:, 0] = e
    const_sigma = field.sigma_constant_in_x
    for k in range(S1 - 1):
        t = t0 + k * dt
        x = paths[:, k, :]
        Jb = field.drift_jac(t, x)
        step = np.einsum("nij,nj->ni", Jb, e) * dt
        if not const_sigma:
            Js = field.sigma_jac(t, x)  # (n, d, d1, d): d sigma_{i,k} / d x_j
            step += np.einsum("nikj,nj,nk->ni", Js, e, dw[:, k, :])
        e = e + step
        if not np.all(np.isfinite(e)):
            raise FieldDefectError(f"derivative flow became non-finite at step {k + 1}")
        eta[:, k + 1] = e
    return eta


def derivative_flow(field: CoefficientField, ens: PathEnsemble, eta0,
                    reduce: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """eta_{k+1} = eta_k + (D sigma^k eta_k) dw^k_k + (D b eta_k) dt along the ensemble's paths.

    Without ``reduce`` the full (M, steps+1, d) array is returned; otherwise
    ``reduce(ids, eta_chunk)`` is applied per chunk and the results concatenated.
    """
    e0 = np.asarray(eta0, dtype=float).reshape(-1)
    if e0.size != ens.d:
        raise UsageError("eta0 must have the state dimension")
    if field.d != ens.d:
        raise UsageError("field and ensemble dimensions differ")
    if reduce is None and ens.nbytes > MATERIALIZE_LIMIT_BYTES:
        raise UsageError("flow too large to return whole; pass a reduce function")

    def per_chunk(ids, paths, dw):
        eta = flow_chunk(field, ens.t0, ens.dt, paths, dw, e0)
        return eta if reduce is None else reduce(ids, eta)

    return ens.map_paths(per_chunk, with_increments=True)
