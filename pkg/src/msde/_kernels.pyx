# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Must stay numerically interchangeable with _kernels_py."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, cos, sin, pow, fabs
from libc.stdint cimport uint32_t, uint64_t, int64_t

cnp.import_array()

cdef uint32_t PHILOX_M0 = 0xD2511F53u
cdef uint32_t PHILOX_M1 = 0xCD9E8D57u
cdef uint32_t PHILOX_W0 = 0x9E3779B9u
cdef uint32_t PHILOX_W1 = 0xBB67AE85u
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline void _philox(uint32_t* c, uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t hi0, lo0, hi1, lo1
    cdef int r
    for r in range(10):
        if r > 0:
            k0 = k0 + PHILOX_W0
            k1 = k1 + PHILOX_W1
        p0 = <uint64_t>PHILOX_M0 * <uint64_t>c[0]
        p1 = <uint64_t>PHILOX_M1 * <uint64_t>c[2]
        hi0 = <uint32_t>(p0 >> 32)
        lo0 = <uint32_t>p0
        hi1 = <uint32_t>(p1 >> 32)
        lo1 = <uint32_t>p1
        c[0] = hi1 ^ c[1] ^ k0
        c[1] = lo1
        c[2] = hi0 ^ c[3] ^ k1
        c[3] = lo0


def philox4x32(ctr, key):
    """Philox4x32-10 applied row-wise: ctr (N, 4) uint32, key (N, 2) or (2,) uint32."""
    cdef cnp.ndarray[uint32_t, ndim=2] c = np.array(ctr, dtype=np.uint32, ndmin=2, copy=True)
    k = np.asarray(key, dtype=np.uint32)
    if k.ndim == 1:
        k = np.broadcast_to(k, (c.shape[0], 2))
    cdef cnp.ndarray[uint32_t, ndim=2] kk = np.ascontiguousarray(k)
    cdef Py_ssize_t i, n = c.shape[0]
    cdef uint32_t buf[4]
    with nogil:
        for i in range(n):
            buf[0] = c[i, 0]; buf[1] = c[i, 1]; buf[2] = c[i, 2]; buf[3] = c[i, 3]
            _philox(buf, kk[i, 0], kk[i, 1])
            c[i, 0] = buf[0]; c[i, 1] = buf[1]; c[i, 2] = buf[2]; c[i, 3] = buf[3]
    return c


def standard_normals(uint64_t seed, path_ids, int64_t step0, Py_ssize_t nsteps, Py_ssize_t dim):
    cdef cnp.ndarray[int64_t, ndim=1] ids = np.ascontiguousarray(path_ids, dtype=np.int64)
    cdef Py_ssize_t npaths = ids.shape[0]
    cdef Py_ssize_t nblocks = (dim + 1) // 2
    cdef cnp.ndarray[double, ndim=3] out = np.empty((npaths, nsteps, dim), dtype=np.float64)
    cdef uint32_t k0 = <uint32_t>(seed & 0xFFFFFFFFu)
    cdef uint32_t k1 = <uint32_t>(seed >> 32)
    cdef Py_ssize_t p, s, b, j
    cdef uint64_t pid, step
    cdef uint32_t buf[4]
    cdef double u1, u2, rad
    with nogil:
        for p in range(npaths):
            pid = <uint64_t>ids[p]
            for s in range(nsteps):
                step = <uint64_t>(step0 + s)
                for b in range(nblocks):
                    buf[0] = <uint32_t>(step & 0xFFFFFFFFu)
                    buf[1] = <uint32_t>((step >> 32) & 0xFFFFu) | (<uint32_t>b << 16)
                    buf[2] = <uint32_t>(pid & 0xFFFFFFFFu)
                    buf[3] = <uint32_t>(pid >> 32)
                    _philox(buf, k0, k1)
                    u1 = (<double>(buf[0] >> 5) * 67108864.0 + <double>(buf[1] >> 6) + 1.0) * INV_2_53
                    u2 = (<double>(buf[2] >> 5) * 67108864.0 + <double>(buf[3] >> 6)) * INV_2_53
                    rad = sqrt(-2.0 * log(u1))
                    j = 2 * b
                    out[p, s, j] = rad * cos(TWO_PI * u2)
                    if j + 1 < dim:
                        out[p, s, j + 1] = rad * sin(TWO_PI * u2)
    return out


def first_exit(paths, center, double radius, int64_t cap):
    """First index k <= cap with |x_k - center| >= radius; cap when none."""
    cdef cnp.ndarray[double, ndim=3] x = np.ascontiguousarray(paths, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] c = np.ascontiguousarray(center, dtype=np.float64)
    cdef Py_ssize_t npaths = x.shape[0], nt = x.shape[1], d = x.shape[2]
    cdef cnp.ndarray[int64_t, ndim=1] out = np.empty(npaths, dtype=np.int64)
    cdef Py_ssize_t p, k, i
    cdef int64_t last = cap if cap < nt - 1 else nt - 1
    cdef double r2 = radius * radius, acc, diff
    with nogil:
        for p in range(npaths):
            out[p] = last
            for k in range(last + 1):
                acc = 0.0
                for i in range(d):
                    diff = x[p, k, i] - c[i]
                    acc = acc + diff * diff
                if acc >= r2:
                    out[p] = k
                    break
    return out


def window_sup_moment(paths, Py_ssize_t window, double power):
    """Per path: mean over disjoint windows of sup_{0<j<=w} |x_{s+j} - x_s|^power."""
    cdef cnp.ndarray[double, ndim=3] x = np.ascontiguousarray(paths, dtype=np.float64)
    cdef Py_ssize_t npaths = x.shape[0], nt = x.shape[1], d = x.shape[2]
    cdef Py_ssize_t nwin = (nt - 1) // window
    if nwin < 1:
        raise ValueError("window longer than the path")
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(npaths, dtype=np.float64)
    cdef Py_ssize_t p, w, j, i, s
    cdef double best, acc, diff, tot
    with nogil:
        for p in range(npaths):
            tot = 0.0
            for w in range(nwin):
                s = w * window
                best = 0.0
                for j in range(1, window + 1):
                    acc = 0.0
                    for i in range(d):
                        diff = x[p, s + j, i] - x[p, s, i]
                        acc = acc + diff * diff
                    if acc > best:
                        best = acc
                tot = tot + pow(best, 0.5 * power)
            out[p] = tot / nwin
    return out


def iterated_sum(dw, masks, ks):
    """sum_{i_1 > i_2 > ... > i_m} prod_l masks[l, i_l] * dw[:, i_l, ks[l]] per path."""
    cdef cnp.ndarray[double, ndim=3] w = np.ascontiguousarray(dw, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] mk = np.ascontiguousarray(masks, dtype=np.float64)
    cdef cnp.ndarray[int64_t, ndim=1] kk = np.ascontiguousarray(ks, dtype=np.int64)
    cdef Py_ssize_t npaths = w.shape[0], ns = w.shape[1], m = mk.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(npaths, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] acc = np.empty(m, dtype=np.float64)
    cdef Py_ssize_t p, i, l
    cdef double term
    with nogil:
        for p in range(npaths):
            for l in range(m):
                acc[l] = 0.0
            for i in range(ns):
                # outer levels first: acc[l + 1] still excludes step i
                for l in range(m):
                    if mk[l, i] == 0.0:
                        continue
                    term = mk[l, i] * w[p, i, kk[l]]
                    if l == m - 1:
                        acc[l] = acc[l] + term
                    else:
                        acc[l] = acc[l] + term * acc[l + 1]
            out[p] = acc[0]
    return out
