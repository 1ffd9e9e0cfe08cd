# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot-path kernels.

Each function mirrors a NumPy/pure-Python fallback in ``protocl.kernels``
with identical arithmetic order, so switching backends never changes
results beyond documented tolerances (the RNG and fold kernels are
bit-exact against their references).
"""

from libc.math cimport log, sqrt
from libc.stdint cimport int64_t, uint64_t

import numpy as np

cimport numpy as cnp

cnp.import_array()


# ---------------------------------------------------------------------------
# xoshiro256** + splitmix64 + polar-method normals

cdef inline uint64_t _rotl(uint64_t x, int k) noexcept nogil:
    return (x << k) | (x >> (64 - k))


cdef struct XoshiroState:
    uint64_t s0
    uint64_t s1
    uint64_t s2
    uint64_t s3


cdef inline uint64_t _splitmix64(uint64_t* sm) noexcept nogil:
    cdef uint64_t z
    sm[0] = sm[0] + <uint64_t>0x9E3779B97F4A7C15
    z = sm[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline void _seed(XoshiroState* st, uint64_t seed) noexcept nogil:
    cdef uint64_t sm = seed
    st.s0 = _splitmix64(&sm)
    st.s1 = _splitmix64(&sm)
    st.s2 = _splitmix64(&sm)
    st.s3 = _splitmix64(&sm)


cdef inline uint64_t _next(XoshiroState* st) noexcept nogil:
    cdef uint64_t result = _rotl(st.s1 * <uint64_t>5, 7) * <uint64_t>9
    cdef uint64_t t = st.s1 << 17
    st.s2 ^= st.s0
    st.s3 ^= st.s1
    st.s1 ^= st.s2
    st.s0 ^= st.s3
    st.s2 ^= t
    st.s3 = _rotl(st.s3, 45)
    return result


cdef inline double _unit(XoshiroState* st) noexcept nogil:
    return <double>(_next(st) >> 11) * (1.0 / 9007199254740992.0)


def standard_normals(uint64_t seed, Py_ssize_t n):
    """n standard normals from a fresh polar-method stream seeded with seed."""
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef XoshiroState st
    cdef double u1, u2, s, m, spare = 0.0
    cdef bint has_spare = False
    cdef Py_ssize_t i = 0
    _seed(&st, seed)
    with nogil:
        while i < n:
            if has_spare:
                o[i] = spare
                has_spare = False
                i += 1
                continue
            u1 = 2.0 * _unit(&st) - 1.0
            u2 = 2.0 * _unit(&st) - 1.0
            s = u1 * u1 + u2 * u2
            if s >= 1.0 or s == 0.0:
                continue
            m = sqrt(-2.0 * log(s) / s)
            o[i] = u1 * m
            i += 1
            spare = u2 * m
            has_spare = True
    return out


# ---------------------------------------------------------------------------
# distance kernels

def sqeuclidean_matrix(const double[:, ::1] queries, const double[:, ::1] means):
    """Pairwise squared Euclidean distances, naive per-pair scan in doubles."""
    cdef Py_ssize_t nq = queries.shape[0]
    cdef Py_ssize_t nc = means.shape[0]
    cdef Py_ssize_t d = queries.shape[1]
    if means.shape[1] != d:
        raise ValueError("dimension mismatch between queries and means")
    out = np.empty((nq, nc), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t q, c, j
    cdef double acc, diff
    with nogil:
        for q in range(nq):
            for c in range(nc):
                acc = 0.0
                for j in range(d):
                    diff = queries[q, j] - means[c, j]
                    acc += diff * diff
                o[q, c] = acc
    return out


def cosine_matrix(const double[:, ::1] queries, const double[:, ::1] means):
    """Pairwise cosine distances 1 - cos; zero-norm rows get similarity 0."""
    cdef Py_ssize_t nq = queries.shape[0]
    cdef Py_ssize_t nc = means.shape[0]
    cdef Py_ssize_t d = queries.shape[1]
    if means.shape[1] != d:
        raise ValueError("dimension mismatch between queries and means")
    out = np.empty((nq, nc), dtype=np.float64)
    mnorm = np.empty(nc, dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double[::1] mn = mnorm
    cdef Py_ssize_t q, c, j
    cdef double acc, dot, qn
    with nogil:
        for c in range(nc):
            acc = 0.0
            for j in range(d):
                acc += means[c, j] * means[c, j]
            mn[c] = sqrt(acc)
        for q in range(nq):
            acc = 0.0
            for j in range(d):
                acc += queries[q, j] * queries[q, j]
            qn = sqrt(acc)
            for c in range(nc):
                if qn == 0.0 or mn[c] == 0.0:
                    o[q, c] = 1.0
                    continue
                dot = 0.0
                for j in range(d):
                    dot += queries[q, j] * means[c, j]
                o[q, c] = 1.0 - dot / (qn * mn[c])
    return out


# ---------------------------------------------------------------------------
# streaming mean fold

def fold_mean(const int64_t[::1] rows, const double[:, ::1] vectors,
              int64_t[::1] counts, double[:, ::1] means):
    """In-place incremental mean update, strictly in record order.

    rows[i] selects the (counts, means) slot of record i. Arithmetic is
    ``mean += (x - mean) / count`` per coordinate in doubles, matching the
    single-record reference path bit for bit.
    """
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t d = vectors.shape[1]
    if means.shape[1] != d:
        raise ValueError("dimension mismatch between vectors and means")
    cdef Py_ssize_t i, j
    cdef int64_t r
    cdef double cnt
    with nogil:
        for i in range(n):
            r = rows[i]
            counts[r] += 1
            cnt = <double>counts[r]
            for j in range(d):
                means[r, j] += (vectors[i, j] - means[r, j]) / cnt


def fold_mean_f32(const int64_t[::1] rows, const float[:, ::1] vectors,
                  int64_t[::1] counts, double[:, ::1] means):
    """fold_mean for float32 payloads; each entry is cast to double exactly."""
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t d = vectors.shape[1]
    if means.shape[1] != d:
        raise ValueError("dimension mismatch between vectors and means")
    cdef Py_ssize_t i, j
    cdef int64_t r
    cdef double cnt
    with nogil:
        for i in range(n):
            r = rows[i]
            counts[r] += 1
            cnt = <double>counts[r]
            for j in range(d):
                means[r, j] += (<double>vectors[i, j] - means[r, j]) / cnt
