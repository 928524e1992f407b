import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from msgfem.linalg import (
    SingularMatrixError,
    as_csr,
    dense_solve,
    is_canonical,
    lu_factor,
    lu_solve,
    matrix_inf_norm,
    reciprocal_condition,
    shift_invert_arnoldi,
)


def _laplacian(n):
    T = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    I = sp.identity(n)
    return (sp.kron(T, I) + sp.kron(I, T)).tocsc()


def test_as_csr_canonical():
    A = sp.coo_matrix(([1.0, 2.0, 0.0, 3.0], ([0, 0, 1, 1], [1, 1, 0, 0])), shape=(2, 2))
    C = as_csr(A)
    assert is_canonical(C)
    assert C[0, 1] == 3.0 and C.nnz == 2
    assert C.dtype == complex


def test_sparse_lu_complex(rng):
    n = 15
    A = (_laplacian(n) - 3.0 * sp.identity(n * n) + 0.5j * sp.identity(n * n)).tocsc()
    b = rng.standard_normal(n * n) + 1j * rng.standard_normal(n * n)
    x = lu_solve(A, b)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) < 1e-12
    fac = lu_factor(A)
    np.testing.assert_allclose(fac.solve(b), x)


def test_singular_detection():
    with pytest.raises(SingularMatrixError):
        lu_factor(sp.csc_matrix(np.array([[1.0, 2.0], [2.0, 4.0]])))
    with pytest.raises(SingularMatrixError):
        lu_factor(sp.csc_matrix((3, 3)))
    with pytest.raises(ValueError):
        lu_factor(sp.csc_matrix((3, 2)))
    with pytest.raises(SingularMatrixError):
        dense_solve(np.ones((3, 3)), np.ones(3))


def test_dense_solve_and_condition(rng):
    A = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    b = rng.standard_normal(6)
    x, rc = dense_solve(A, b, return_rcond=True)
    np.testing.assert_allclose(A @ x, b, atol=1e-12)
    assert 0 < rc <= 1
    assert reciprocal_condition(np.eye(4)) == pytest.approx(1.0)
    assert reciprocal_condition(np.diag([1.0, 1e-10])) == pytest.approx(1e-10)
    assert dense_solve(np.zeros((0, 0)), np.zeros(0)).shape == (0,)
    assert matrix_inf_norm(np.array([[1, -2], [3, 0]])) == 3.0
    assert matrix_inf_norm(sp.csr_matrix(np.array([[1, -2], [3, 0]]))) == 3.0


@pytest.mark.parametrize("n_want", [3, 12])
def test_arnoldi_matches_dense_pencil(rng, n_want):
    n = 12
    K = _laplacian(n)
    N = n * n
    B = rng.standard_normal((N, 6))
    Mw = sp.csr_matrix(B @ B.T) + sp.diags(rng.uniform(0, 1, N) * (rng.uniform(size=N) < 0.3))
    res = shift_invert_arnoldi(K, Mw, n_want, tol=1e-10, seed=4)
    ref = sla.eigh(Mw.toarray(), K.toarray(), eigvals_only=True)[::-1][:n_want]
    np.testing.assert_allclose(res.eigenvalues, ref, rtol=1e-8, atol=1e-12 * ref[0])
    assert res.residuals.max() < 1e-8 * ref[0]
    assert np.all(np.diff(res.eigenvalues) <= 0)


def test_arnoldi_saddle_point_primal_block(rng):
    # constrained pencil: maximize x^H W x / x^H A x subject to C x = 0
    n = 100
    A = _laplacian(10)
    C = sp.csr_matrix(rng.standard_normal((30, n)))
    Kblk = sp.bmat([[A, C.T], [C, None]], format="csc")
    G = rng.standard_normal((n, n))
    W = sp.csr_matrix(G @ G.T)
    Mw = sp.bmat([[W, None], [None, sp.csr_matrix((30, 30))]], format="csr")
    res = shift_invert_arnoldi(Kblk, Mw, 8, tol=1e-10, seed=1, n_primal=n)
    Nb = sla.null_space(C.toarray())
    ref = sla.eigh(Nb.T @ W.toarray() @ Nb, Nb.T @ A.toarray() @ Nb, eigvals_only=True)[::-1]
    np.testing.assert_allclose(res.eigenvalues, ref[:8], rtol=1e-8)
    X = res.eigenvectors[:n]
    assert np.abs(C @ X).max() < 1e-8 * np.abs(X).max()


def test_arnoldi_deterministic_and_empty(rng):
    K = _laplacian(10)
    Mw = sp.identity(100, format="csr")
    a = shift_invert_arnoldi(K, Mw, 5, seed=7)
    b = shift_invert_arnoldi(K, Mw, 5, seed=7)
    np.testing.assert_array_equal(a.eigenvalues, b.eigenvalues)
    assert shift_invert_arnoldi(K, Mw, 0).eigenvectors.shape == (100, 0)
