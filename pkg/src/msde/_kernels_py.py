"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)


def _philox_rounds(c0, c1, c2, c3, k0, k1):
    # all arrays uint64 holding 32-bit values
    k0 = k0.copy()
    k1 = k1.copy()
    for r in range(10):
        if r > 0:
            k0 = (k0 + np.uint64(_W0)) & _MASK32
            k1 = (k1 + np.uint64(_W1)) & _MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def philox4x32(ctr, key):
    """Philox4x32-10 applied row-wise: ctr (N, 4) uint32, key (N, 2) or (2,) uint32."""
    c = np.array(ctr, dtype=np.uint32, ndmin=2).astype(np.uint64)
    k = np.asarray(key, dtype=np.uint32).astype(np.uint64)
    if k.ndim == 1:
        k = np.broadcast_to(k, (c.shape[0], 2))
    out = _philox_rounds(c[:, 0], c[:, 1], c[:, 2], c[:, 3], k[:, 0], k[:, 1])
    return np.stack(out, axis=1).astype(np.uint32)


def standard_normals(seed, path_ids, step0, nsteps, dim):
    ids = np.ascontiguousarray(path_ids, dtype=np.int64).astype(np.uint64)
    npaths = ids.shape[0]
    nblocks = (dim + 1) // 2
    seed = int(seed)
    steps = np.arange(step0, step0 + nsteps, dtype=np.uint64)
    pid = np.broadcast_to(ids[:, None, None], (npaths, nsteps, nblocks))
    st = np.broadcast_to(steps[None, :, None], (npaths, nsteps, nblocks))
    blk = np.broadcast_to(np.arange(nblocks, dtype=np.uint64)[None, None, :], (npaths, nsteps, nblocks))
    c0 = (st & _MASK32).ravel()
    c1 = (((st >> _SHIFT32) & np.uint64(0xFFFF)) | (blk << np.uint64(16))).ravel()
    c2 = (pid & _MASK32).ravel()
    c3 = (pid >> _SHIFT32).ravel()
    k0 = np.full(c0.shape, seed & 0xFFFFFFFF, dtype=np.uint64)
    k1 = np.full(c0.shape, (seed >> 32) & 0xFFFFFFFF, dtype=np.uint64)
    r0, r1, r2, r3 = _philox_rounds(c0, c1, c2, c3, k0, k1)
    five, six = np.uint64(5), np.uint64(6)
    u1 = ((r0 >> five).astype(np.float64) * 67108864.0 + (r1 >> six).astype(np.float64) + 1.0) / 9007199254740992.0
    u2 = ((r2 >> five).astype(np.float64) * 67108864.0 + (r3 >> six).astype(np.float64)) / 9007199254740992.0
    rad = np.sqrt(-2.0 * np.log(u1))
    z = np.empty((c0.shape[0], 2))
    z[:, 0] = rad * np.cos(2.0 * np.pi * u2)
    z[:, 1] = rad * np.sin(2.0 * np.pi * u2)
    return z.reshape(npaths, nsteps, 2 * nblocks)[:, :, :dim].copy()


def first_exit(paths, center, radius, cap):
    x = np.asarray(paths, dtype=np.float64)
    last = min(int(cap), x.shape[1] - 1)
    r2 = np.sum((x[:, : last + 1, :] - np.asarray(center, dtype=np.float64)) ** 2, axis=2)
    hit = r2 >= radius * radius
    any_hit = hit.any(axis=1)
    return np.where(any_hit, hit.argmax(axis=1), last).astype(np.int64)


def window_sup_moment(paths, window, power):
    x = np.asarray(paths, dtype=np.float64)
    nwin = (x.shape[1] - 1) // window
    if nwin < 1:
        raise ValueError("window longer than the path")
    tot = np.zeros(x.shape[0])
    for w in range(nwin):
        s = w * window
        seg = x[:, s + 1 : s + window + 1, :] - x[:, s : s + 1, :]
        best = np.max(np.sum(seg * seg, axis=2), axis=1)
        tot += best ** (0.5 * power)
    return tot / nwin


def iterated_sum(dw, masks, ks):
    w = np.asarray(dw, dtype=np.float64)
    mk = np.asarray(masks, dtype=np.float64)
    m = mk.shape[0]
    # innermost level: inclusive running sum; each outer level uses the strictly earlier part
    inner = mk[m - 1][None, :] * w[:, :, ks[m - 1]]
    for l in range(m - 2, -1, -1):
        prev = np.cumsum(inner, axis=1)
        earlier = np.zeros_like(prev)
        earlier[:, 1:] = prev[:, :-1]
        inner = mk[l][None, :] * w[:, :, ks[l]] * earlier
    return inner.sum(axis=1)
