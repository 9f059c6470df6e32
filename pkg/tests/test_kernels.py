"""Both kernel implementations must agree with each other and with oracles."""

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.special

from bse import _kernels


def _random_csr(n, rng):
    a = sp.random(n, n, density=0.2, random_state=np.random.RandomState(3), format="csr")
    a = a + sp.eye(n)
    a.sort_indices()
    return a


@pytest.mark.parametrize("impl", [_kernels._csr_matvec_numpy, _kernels._csr_matvec_numba])
def test_csr_matvec_matches_scipy(impl):
    rng = np.random.default_rng(0)
    a = _random_csr(50, rng)
    x = rng.standard_normal(50)
    got = impl(a.indptr.astype(np.int64), a.indices.astype(np.int64),
               np.asarray(a.data, dtype=np.float64), x)
    np.testing.assert_allclose(got, a @ x, atol=1e-13)


@pytest.mark.parametrize("impl", [_kernels._tri_entries_numpy, _kernels._tri_entries_numba])
def test_tri_entries_reference_triangle(impl):
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    triangles = np.array([[0, 1, 2]], dtype=np.int64)
    rows, cols, stiff, mass, areas = impl(vertices, triangles)
    k = np.zeros((3, 3))
    m = np.zeros((3, 3))
    for r, c, sv, mv in zip(rows, cols, stiff, mass):
        k[r, c] += sv
        m[r, c] += mv
    np.testing.assert_allclose(k, 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]),
                               atol=1e-15)
    np.testing.assert_allclose(m, (0.5 / 12.0) * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]),
                               atol=1e-16)
    np.testing.assert_allclose(areas, [0.5])


def test_tri_entries_backends_agree():
    rng = np.random.default_rng(1)
    vertices = rng.uniform(0, 1, (20, 2))
    # fan of valid CCW triangles around a central point
    center = np.array([[0.5, 0.5]])
    vertices = np.vstack([center, 0.5 + 0.4 * np.column_stack(
        [np.cos(np.linspace(0, 2 * np.pi, 9)[:-1]), np.sin(np.linspace(0, 2 * np.pi, 9)[:-1])])])
    triangles = np.array([[0, 1 + i, 1 + (i + 1) % 8] for i in range(8)], dtype=np.int64)
    out_np = _kernels._tri_entries_numpy(vertices, triangles)
    out_nb = _kernels._tri_entries_numba(vertices, triangles)
    for a, b in zip(out_np, out_nb):
        np.testing.assert_allclose(np.asarray(a, dtype=np.float64),
                                   np.asarray(b, dtype=np.float64), atol=1e-13)


@pytest.mark.parametrize("impl", [_kernels._pcg_numpy, _kernels._pcg_numba])
def test_pcg_spd_system(impl):
    rng = np.random.default_rng(2)
    n = 40
    a = sp.diags([2.0 + rng.uniform(0, 1, n)], [0]).tocsr()
    off = sp.random(n, n, density=0.1, random_state=np.random.RandomState(9))
    a = (a + 0.05 * (off + off.T)).tocsr()
    a.sort_indices()
    b = rng.standard_normal(n)
    dinv = 1.0 / a.diagonal()
    x, it, res = impl(a.indptr.astype(np.int64), a.indices.astype(np.int64),
                      np.asarray(a.data, dtype=np.float64), dinv, b,
                      np.empty(0), np.empty(0), 1e-13, 2000)
    np.testing.assert_allclose(a @ x, b, atol=1e-10)
    assert res <= 1e-13


@pytest.mark.parametrize("impl", [_kernels._pcg_numpy, _kernels._pcg_numba])
def test_pcg_singular_with_projection(impl):
    # 1D periodic Laplacian: kernel = constants; constraint: weighted mean zero
    n = 30
    rows, cols, vals = [], [], []
    for i in range(n):
        j = (i + 1) % n
        rows += [i, i, j, j]
        cols += [i, j, i, j]
        vals += [1.0, -1.0, -1.0, 1.0]
    a = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    a.sort_indices()
    rng = np.random.default_rng(4)
    b = rng.standard_normal(n)
    b -= b.mean()
    c = rng.uniform(1.0, 2.0, n)
    k = np.ones(n)
    dinv = 1.0 / a.diagonal()
    x, it, res = impl(a.indptr.astype(np.int64), a.indices.astype(np.int64),
                      np.asarray(a.data, dtype=np.float64), dinv, b, c, k, 1e-12, 2000)
    assert res <= 1e-12
    assert abs(c @ x) <= 1e-10
    np.testing.assert_allclose(a @ x, b, atol=1e-9)


def test_bessel_series_vs_miller_continuity():
    # the two evaluation regimes must agree where they meet
    for m in range(0, 12):
        lo = _kernels._bessel_j_series(m, 11.9)
        hi = _kernels._bessel_j_miller(m, 11.9)
        assert abs(lo - hi) < 1e-12


def test_bessel_vs_scipy_grid():
    xs = np.concatenate([np.linspace(0.01, 12, 40), np.linspace(12.1, 180, 40)])
    worst = 0.0
    for m in (0, 1, 2, 5, 11, 20, 30):
        for x in xs:
            worst = max(worst, abs(_kernels.bessel_j_raw(m, float(x))
                                   - scipy.special.jv(m, x)))
    assert worst <= 1e-12


def test_backend_flag_reports():
    assert _kernels.kernel_backend() in ("numba", "numpy")
