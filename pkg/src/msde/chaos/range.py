"""Orthogonal projection onto the range of sigma^T sigma."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UsageError

RELATIVE_CUTOFF = 1e-12


@dataclass(frozen=True)
class RangeProjection:
    sigma: np.ndarray  # d x d1
    tau: np.ndarray  # d1 x d1
    Sigma: np.ndarray  # d1 x d1

    def defects(self) -> dict:
        """Max-abs violations of the three projection identities."""
        S, t, s = self.Sigma, self.tau, self.sigma
        return {
            "idempotent": float(np.max(np.abs(S @ S - S), initial=0.0)),
            "fixes_tau": float(np.max(np.abs(S @ t - t), initial=0.0)),
            "sigma_invariant": float(np.max(np.abs(s @ S - s), initial=0.0)),
        }


def range_projection(sigma) -> RangeProjection:
    """Sigma = lim_{eps -> 0} tau (tau + eps I)^{-1}, realized by discarding eigenvalues below
    ``RELATIVE_CUTOFF`` times the largest."""
    s = np.atleast_2d(np.asarray(sigma, dtype=float))
    if not np.all(np.isfinite(s)):
        raise UsageError("sigma must have finite entries")
    tau = s.T @ s
    # eigenvalues of tau are the squared singular values of sigma; the SVD avoids squaring errors
    _, sv, Vt = np.linalg.svd(s, full_matrices=True)
    ev = np.zeros(Vt.shape[0])
    ev[: sv.size] = sv**2
    top = float(ev.max()) if ev.size else 0.0
    keep = ev > RELATIVE_CUTOFF * top if top > 0 else np.zeros(ev.size, dtype=bool)
    Vr = Vt[keep].T
    return RangeProjection(s, tau, Vr @ Vr.T)
