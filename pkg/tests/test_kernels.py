"""Backend parity: the compiled kernels against the NumPy fallbacks."""

import numpy as np
import pytest

from protocl import kernels
from protocl.kernels import (_np_cosine_matrix, _np_fold_mean,
                             _np_sqeuclidean_matrix, _np_standard_normals)

needs_native = pytest.mark.skipif(not kernels.using_native(),
                                  reason="compiled kernels not built")


def test_backend_reported():
    assert kernels.BACKEND in ("native", "numpy")
    assert kernels.using_native() == (kernels.BACKEND == "native")


@needs_native
def test_sqeuclidean_parity():
    rng = np.random.default_rng(1)
    q = rng.normal(size=(50, 33))
    m = rng.normal(size=(7, 33))
    native = kernels.sqeuclidean_matrix(q, m)
    fallback = _np_sqeuclidean_matrix(q, m)
    np.testing.assert_allclose(native, fallback, rtol=1e-12, atol=1e-12)
    assert np.array_equal(native.argmin(axis=1), fallback.argmin(axis=1))


@needs_native
def test_cosine_parity_and_zero_norm():
    rng = np.random.default_rng(2)
    q = rng.normal(size=(20, 9))
    q[3] = 0.0  # zero-norm query pins distance to 1
    m = rng.normal(size=(5, 9))
    native = kernels.cosine_matrix(q, m)
    fallback = _np_cosine_matrix(q, m)
    np.testing.assert_allclose(native, fallback, rtol=1e-12, atol=1e-12)
    assert (native[3] == 1.0).all()


@needs_native
def test_fold_mean_bit_parity():
    rng = np.random.default_rng(3)
    rows = rng.integers(0, 6, size=500).astype(np.int64)
    vectors = np.ascontiguousarray(rng.normal(size=(500, 11)))
    counts_a = np.zeros(6, dtype=np.int64)
    means_a = np.zeros((6, 11), dtype=np.float64)
    kernels.fold_mean(rows, vectors, counts_a, means_a)
    counts_b = np.zeros(6, dtype=np.int64)
    means_b = np.zeros((6, 11), dtype=np.float64)
    _np_fold_mean(rows, vectors, counts_b, means_b)
    assert np.array_equal(counts_a, counts_b)
    assert means_a.tobytes() == means_b.tobytes()


@needs_native
def test_standard_normals_bit_parity():
    native = kernels.standard_normals(123, 3001)
    fallback = _np_standard_normals(123, 3001)
    assert native.tobytes() == fallback.tobytes()


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError, match="dimension"):
        kernels.sqeuclidean_matrix(np.zeros((2, 3)), np.zeros((2, 4)))


def test_forced_numpy_backend_subprocess():
    import subprocess
    import sys
    code = ("import protocl.kernels as k; "
            "assert k.BACKEND == 'numpy', k.BACKEND; "
            "import numpy as np; "
            "d = k.sqeuclidean_matrix(np.zeros((2, 3)), np.ones((2, 3))); "
            "assert (d == 3.0).all()")
    out = subprocess.run([sys.executable, "-c", code],
                         env={"PROTO_CL_BACKEND": "numpy", "PATH": "/usr/bin:/bin"},
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
