"""Euler-Maruyama ensembles driven by counter-based Gaussian streams.

Paths are a pure function of (field, t0, x0, T, dt, M, seed, drift_cap):
increment k of path p comes from the Philox counter (seed, p, k), so any
chunk of paths can be regenerated on demand. Large ensembles are therefore
never stored; consumers iterate over fixed-size chunks.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterator, Optional

import numpy as np

from .. import kernels
from ..errors import BlowUpError, BudgetError, GridFormatError, UsageError
from ..fields import CoefficientField, atomic_write

MATERIALIZE_LIMIT_BYTES = 256 * 2**20
DEFAULT_CHUNK = 4096


def default_drift_cap(dt: float) -> float:
    return dt**-0.5


@dataclass(eq=False)
class PathEnsemble:
    field: Optional[CoefficientField]
    t0: float
    x0: np.ndarray
    T: float
    dt: float
    M: int
    seed: int
    d1: int
    drift_cap: Optional[float] = None
    workers: int = 1
    chunk: int = DEFAULT_CHUNK
    _stored: Optional[np.ndarray] = dc_field(default=None, repr=False)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if self.dt <= 0:
            raise UsageError("dt must be positive")
        if self.M < 1:
            raise UsageError("need at least one path")
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise UsageError("T must be an integer multiple of dt")
        if self.field is not None and self.field.d != self.x0.size:
            raise UsageError("x0 dimension does not match the field")

    @property
    def d(self) -> int:
        return self.x0.size

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1)

    @property
    def stream_ids(self) -> np.ndarray:
        return np.arange(self.M, dtype=np.int64)

    def increments(self, ids: np.ndarray) -> np.ndarray:
        """Brownian increments (len(ids), steps, d1) of the given paths."""
        ids = np.asarray(ids, dtype=np.int64)
        z = kernels.standard_normals(self.seed & (2**64 - 1), ids, 0, self.steps, self.d1)
        return z * math.sqrt(self.dt)

    def _simulate(self, ids: np.ndarray) -> np.ndarray:
        if self._stored is not None:
            return self._stored[ids]
        return euler_maruyama(self.field, self.t0, self.x0, self.dt, self.steps, self.increments(ids),
                              self.drift_cap, ids)

    def chunk_ranges(self, chunk: Optional[int] = None):
        c = chunk or self.chunk
        return [np.arange(lo, min(self.M, lo + c), dtype=np.int64) for lo in range(0, self.M, c)]

    def iter_chunks(self, with_increments: bool = False, chunk: Optional[int] = None) -> Iterator:
        for ids in self.chunk_ranges(chunk):
            paths = self._simulate(ids)
            if with_increments:
                yield ids, paths, self.increments(ids)
            else:
                yield ids, paths

    def map_paths(self, fn: Callable, with_increments: bool = False) -> np.ndarray:
        """Apply ``fn(ids, paths[, dw])`` chunk by chunk and concatenate in path order.

        Chunk boundaries do not depend on ``workers``, so results are bit-identical
        for every worker count.
        """

        def job(ids):
            paths = self._simulate(ids)
            if with_increments:
                return fn(ids, paths, self.increments(ids))
            return fn(ids, paths)

        ranges = self.chunk_ranges()
        if self.workers <= 1 or len(ranges) == 1:
            parts = [job(ids) for ids in ranges]
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                parts = list(pool.map(job, ranges))
        return np.concatenate(parts, axis=0)

    @property
    def nbytes(self) -> int:
        return self.M * (self.steps + 1) * self.d * 8

    @property
    def paths(self) -> np.ndarray:
        if self._stored is None:
            if self.nbytes > MATERIALIZE_LIMIT_BYTES:
                raise BudgetError(
                    f"ensemble needs {self.nbytes / 2**20:.0f} MiB; iterate with iter_chunks instead"
                )
            self._stored = self.map_paths(lambda ids, p: p)
        return self._stored

    def terminal(self, step: Optional[int] = None) -> np.ndarray:
        k = self.steps if step is None else step
        return self.map_paths(lambda ids, p: p[:, k, :].copy())

    def snapshots(self, steps) -> np.ndarray:
        """States at several grid indices, (M, len(steps), d), in one pass over the paths."""
        idx = np.asarray(steps, dtype=np.int64)
        return self.map_paths(lambda ids, p: p[:, idx, :].copy())

    def step_of(self, t: float) -> int:
        k = (t - self.t0) / self.dt
        if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)) or not (0 <= round(k) <= self.steps):
            raise UsageError(f"time {t} is not on the ensemble grid")
        return int(round(k))


def euler_maruyama(field: CoefficientField, t0: float, x0: np.ndarray, dt: float, steps: int,
                   dw: np.ndarray, drift_cap: Optional[float] = None,
                   ids: Optional[np.ndarray] = None) -> np.ndarray:
    """x_{k+1} = x_k + sigma(t_k, x_k) dw_k + b(t_k, x_k) dt, with |b| capped when requested."""
    n = dw.shape[0]
    d = field.d
    out = np.empty((n, steps + 1, d))
    x = np.broadcast_to(np.asarray(x0, dtype=float), (n, d)).copy()
    out[:, 0] = x
    const_sigma = field.sigma_constant_in_x and not field.time_dependent
    if const_sigma:
        # constant sigma is defined on the drift's singular set too
        sig0 = np.asarray(field.sigma_fn(np.full(1, t0), x[:1]), dtype=float)[0]
    mode = "raise" if drift_cap is None else "zero"
    for k in range(steps):
        t = t0 + k * dt
        if const_sigma:
            noise = dw[:, k, :] @ sig0.T
        else:
            sig = field.sigma(t, x)
            noise = np.einsum("nij,nj->ni", sig, dw[:, k, :])
        b = field.drift(t, x, on_singular=mode)
        if drift_cap is not None:
            mag = np.sqrt(np.sum(b * b, axis=1))
            over = mag > drift_cap
            if over.any():
                b[over] *= (drift_cap / mag[over])[:, None]
        with np.errstate(over="ignore", invalid="ignore"):
            # non-finite states are reported as BlowUpError just below
            x = x + noise + b * dt
        if not np.all(np.isfinite(x)):
            bad = int(np.argmax(~np.all(np.isfinite(x), axis=1)))
            pid = int(ids[bad]) if ids is not None else bad
            raise BlowUpError(pid, k + 1)
        out[:, k + 1] = x
    return out


def simulate_paths(field: CoefficientField, t0: float, x0, T: float, dt: float, M: int, seed: int,
                   drift_cap: Optional[float] = None, workers: int = 1,
                   chunk: int = DEFAULT_CHUNK) -> PathEnsemble:
    """Build a lazily evaluated ensemble; paths are generated chunk by chunk on access."""
    ens = PathEnsemble(field, float(t0), np.asarray(x0, dtype=float), float(T), float(dt), int(M),
                       int(seed), field.d1, drift_cap, workers, chunk)
    if ens.nbytes <= MATERIALIZE_LIMIT_BYTES // 8:
        _ = ens.paths  # small ensembles are cheap to keep; surfaces blow-ups eagerly
    return ens


# -- MSDEPATH persistence -------------------------------------------------

PATH_MAGIC = b"MSDEPATH"
PATH_VERSION = 1


def save_ensemble(path: str, ens: PathEnsemble) -> None:
    """Header then the full (M, steps+1, d) float64 payload, little-endian."""
    head = bytearray(PATH_MAGIC)
    head += struct.pack("<HQIIBBdd", PATH_VERSION, ens.seed & (2**64 - 1), ens.M, ens.steps, ens.d,
                        ens.d1, ens.dt, ens.t0)
    head += np.ascontiguousarray(ens.x0, dtype="<f8").tobytes()
    parts = [bytes(head)]
    for _, paths in ens.iter_chunks():
        parts.append(np.ascontiguousarray(paths, dtype="<f8").tobytes())
    atomic_write(path, b"".join(parts))


def load_ensemble(path: str, workers: int = 1) -> PathEnsemble:
    with open(path, "rb") as fh:
        raw = fh.read()
    fixed = struct.calcsize("<HQIIBBdd")
    if raw[:8] != PATH_MAGIC:
        raise GridFormatError("bad magic bytes")
    if len(raw) < 8 + fixed:
        raise GridFormatError("truncated header")
    version, seed, M, steps, d, d1, dt, t0 = struct.unpack("<HQIIBBdd", raw[8 : 8 + fixed])
    if version != PATH_VERSION:
        raise GridFormatError(f"unsupported version {version}")
    pos = 8 + fixed
    x0 = np.frombuffer(raw[pos : pos + 8 * d], dtype="<f8").astype(float)
    pos += 8 * d
    expected = M * (steps + 1) * d * 8
    if len(raw) - pos != expected:
        raise GridFormatError(f"payload has {len(raw) - pos} bytes, header implies {expected}")
    paths = np.frombuffer(raw[pos:], dtype="<f8").reshape(M, steps + 1, d).astype(float)
    return PathEnsemble(None, t0, x0, steps * dt, dt, M, seed, d1, None, workers, DEFAULT_CHUNK, paths)
