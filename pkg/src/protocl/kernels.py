"""Hot-path kernels with a compiled core and a NumPy fallback.

The backend is chosen once at import: the Cython extension when it built,
else NumPy/pure-Python implementations of the same arithmetic. Set
``PROTO_CL_BACKEND=numpy`` or ``PROTO_CL_BACKEND=native`` to force one
(forcing ``native`` raises if the extension is unavailable).

Both backends of ``standard_normals`` and ``fold_mean`` are bit-exact
against each other; the distance matrices agree to float rounding and,
by contract, in argmin.
"""

from __future__ import annotations

import os

import numpy as np

from .rng import Xoshiro256StarStar

_ENV_VAR = "PROTO_CL_BACKEND"


def _load_native():
    forced = os.environ.get(_ENV_VAR, "").strip().lower()
    if forced == "numpy":
        return None
    try:
        from ._native import _kernels  # type: ignore[attr-defined]
        return _kernels
    except ImportError:
        if forced == "native":
            raise ImportError(
                "PROTO_CL_BACKEND=native but the compiled kernels are not "
                "installed; rebuild the package or unset the variable"
            ) from None
        return None


_native = _load_native()

BACKEND = "native" if _native is not None else "numpy"


def using_native() -> bool:
    return _native is not None


def _as_f64_matrix(a, name: str) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {out.shape}")
    return out


# --- NumPy fallbacks -------------------------------------------------------

def _np_sqeuclidean_matrix(queries: np.ndarray, means: np.ndarray) -> np.ndarray:
    out = np.empty((queries.shape[0], means.shape[0]), dtype=np.float64)
    for c in range(means.shape[0]):
        diff = queries - means[c]
        out[:, c] = (diff * diff).sum(axis=1)
    return out


def _np_cosine_matrix(queries: np.ndarray, means: np.ndarray) -> np.ndarray:
    qn = np.sqrt((queries * queries).sum(axis=1))
    mn = np.sqrt((means * means).sum(axis=1))
    dots = queries @ means.T
    scale = np.outer(qn, mn)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(scale > 0.0, dots / scale, 0.0)
    return 1.0 - cos


def _np_fold_mean(rows: np.ndarray, vectors: np.ndarray,
                  counts: np.ndarray, means: np.ndarray) -> None:
    for i in range(rows.shape[0]):
        r = rows[i]
        counts[r] += 1
        means[r] += (vectors[i] - means[r]) / counts[r]


def _np_standard_normals(seed: int, n: int) -> np.ndarray:
    return Xoshiro256StarStar(seed).normals(n)


# --- public dispatchers ----------------------------------------------------

def sqeuclidean_matrix(queries, means) -> np.ndarray:
    """(Q, C) squared Euclidean distances in float64."""
    q = _as_f64_matrix(queries, "queries")
    m = _as_f64_matrix(means, "means")
    if q.shape[1] != m.shape[1]:
        raise ValueError("dimension mismatch between queries and means")
    if _native is not None:
        return _native.sqeuclidean_matrix(q, m)
    return _np_sqeuclidean_matrix(q, m)


def cosine_matrix(queries, means) -> np.ndarray:
    """(Q, C) cosine distances (1 - cosine similarity) in float64."""
    q = _as_f64_matrix(queries, "queries")
    m = _as_f64_matrix(means, "means")
    if q.shape[1] != m.shape[1]:
        raise ValueError("dimension mismatch between queries and means")
    if _native is not None:
        return _native.cosine_matrix(q, m)
    return _np_cosine_matrix(q, m)


def fold_mean(rows, vectors, counts, means) -> None:
    """Streaming mean update in record order; mutates counts and means.

    rows: int64 (N,) slot index per record; vectors: (N, d) C-contiguous
    float32 or float64 (float32 entries are widened exactly, so both carry
    the full 64-bit recurrence); counts: int64 (R,); means: float64 (R, d).
    """
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    if vectors.dtype != np.float32:
        vectors = _as_f64_matrix(vectors, "vectors")
    else:
        vectors = np.ascontiguousarray(vectors)
    if counts.dtype != np.int64 or means.dtype != np.float64:
        raise ValueError("counts must be int64 and means float64")
    if _native is not None:
        if vectors.dtype == np.float32:
            _native.fold_mean_f32(rows, vectors, counts, means)
        else:
            _native.fold_mean(rows, vectors, counts, means)
    else:
        _np_fold_mean(rows, vectors, counts, means)


def standard_normals(seed: int, n: int) -> np.ndarray:
    """n standard normals from the portable generator seeded with seed."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if _native is not None:
        return _native.standard_normals(seed, n)
    return _np_standard_normals(seed, n)
