"""Sparse complex linear algebra on top of SuperLU and ARPACK."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class EigenNotConverged(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


def as_csr(A) -> sp.csr_matrix:
    """Canonical complex CSR: sorted, deduplicated, no stored zeros."""
    A = sp.csr_matrix(A, dtype=complex)
    A.sum_duplicates()
    A.sort_indices()
    A.eliminate_zeros()
    return A


def is_canonical(A: sp.csr_matrix) -> bool:
    if not A.has_canonical_format:
        return False
    for r in range(A.shape[0]):
        cols = A.indices[A.indptr[r]:A.indptr[r + 1]]
        if np.any(np.diff(cols) <= 0):
            return False
    return not np.any(A.data == 0)


@dataclass
class Factorization:
    """LU factors of a square sparse matrix (row/column permuted by SuperLU)."""

    lu: spla.SuperLU
    shape: tuple

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self.lu.solve(np.asarray(b, dtype=complex))


def lu_factor(A) -> Factorization:
    A = sp.csc_matrix(A, dtype=complex)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:  # SuperLU reports exact singularity this way
        raise SingularMatrixError(str(exc)) from None
    d = np.abs(lu.U.diagonal())
    if d.size and (d.min() <= 1e-14 * d.max() or not np.all(np.isfinite(d))):
        raise SingularMatrixError(
            f"numerically singular matrix (|U_ii| ratio {d.min() / d.max():.2e})"
        )
    return Factorization(lu, A.shape)


def lu_solve(A, b) -> np.ndarray:
    return lu_factor(A).solve(b)


@dataclass
class EigResult:
    eigenvalues: np.ndarray  # real, descending
    eigenvectors: np.ndarray  # columns
    residuals: np.ndarray
    max_imag: float = 0.0  # largest |Im| of the raw Ritz values
    seed: int = 0
    info: dict = field(default_factory=dict)


def _start_vector(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.ones(n, dtype=complex) + rng.uniform(-1.0, 1.0, n)


def shift_invert_arnoldi(K, Mw, n_want: int, tol: float = 1e-8,
                         max_subspace: int | None = None, seed: int = 0,
                         max_restarts: int = 200, n_primal: int | None = None) -> EigResult:
    """Largest eigenvalues ``mu`` of ``mu K x = Mw x`` for invertible ``K``.

    Arnoldi (ARPACK, implicit restarts) runs on ``x -> K^{-1} Mw x`` with one
    LU of ``K``.  When ``Mw`` vanishes outside its leading ``n_primal`` block
    (saddle-point pencils), the iteration runs on that block only:
    ``x_p -> [K^{-1} (Mw_pp x_p, 0)]_p`` has the same nonzero spectrum and
    avoids the strongly non-normal multiplier components.

    ``K`` and ``Mw`` are Hermitian, so each returned value is the Rayleigh
    quotient ``x^H Mw x / x^H K x`` and hence exactly real.
    """
    K = sp.csc_matrix(K, dtype=complex)
    Mw = sp.csr_matrix(Mw, dtype=complex)
    n = K.shape[0]
    if n_want <= 0:
        return EigResult(np.zeros(0), np.zeros((n, 0), complex), np.zeros(0), seed=seed)
    fac = lu_factor(K)
    npr = n if n_primal is None else int(n_primal)
    Wpp = Mw[:npr][:, :npr].tocsr()

    def apply(xp):
        rhs = np.zeros((n,) + xp.shape[1:], dtype=complex)
        rhs[:npr] = Wpp @ xp
        return fac.solve(rhs)

    ncv = max_subspace or 2 * n_want + 20
    ncv = min(ncv, npr)
    if n_want >= npr - 1 or ncv <= n_want + 1 or npr <= 64:
        mu, X = _dense_pencil(K, Mw)
        mu, X = mu[:n_want], X[:, :n_want]
        max_imag = float(np.max(np.abs(mu.imag))) if mu.size else 0.0
        niter = 0
    else:
        op = spla.LinearOperator((npr, npr), matvec=lambda x: apply(x)[:npr], dtype=complex)
        # Filter the start vector so the Krylov space lies in the range of
        # the operator; with singular Mw the raw vector has null-space parts.
        v0 = apply(_start_vector(npr, seed))[:npr]
        if not np.any(v0):
            v0 = _start_vector(npr, seed)
        try:
            mu, Xp = spla.eigs(op, k=n_want, which="LM", v0=v0,
                               ncv=ncv, tol=tol * 1e-2, maxiter=max_restarts * npr)
        except spla.ArpackNoConvergence as exc:
            raise EigenNotConverged(
                f"Arnoldi did not converge: {len(exc.eigenvalues)} of {n_want} pairs",
                exc.eigenvalues,
            ) from None
        max_imag = float(np.max(np.abs(mu.imag)))
        niter = None
        # One more operator application purges null-space components and
        # recovers the remaining blocks of the eigenvectors.
        mu_safe = np.where(np.abs(mu) > 1e-300, mu, 1.0)
        X = apply(Xp) / mu_safe[None, :]
    num = np.einsum("ij,ij->j", X.conj(), Mw @ X).real
    den = np.einsum("ij,ij->j", X.conj(), K @ X).real
    lam = num / den
    order = np.argsort(-lam, kind="stable")
    lam, X = lam[order], X[:, order]
    res = _residuals(K, Mw, lam, X)
    scale = abs(lam[0]) if lam.size else 1.0
    return EigResult(lam, X, res, max_imag=max_imag / max(scale, 1e-300), seed=seed,
                     info={"ncv": ncv, "n": n, "iterations": niter})


def _dense_pencil(K, Mw):
    Kd = K.toarray()
    Md = Mw.toarray()
    mu, X = sla.eig(Md, Kd)
    mu = np.where(np.isfinite(mu), mu, 0)
    order = np.argsort(-mu.real, kind="stable")
    return mu[order], X[:, order]


def _residuals(K, Mw, lam, X) -> np.ndarray:
    if X.shape[1] == 0:
        return np.zeros(0)
    R = Mw @ X - (K @ X) * lam[None, :]
    return np.linalg.norm(R, axis=0) / np.linalg.norm(X, axis=0)


def matrix_inf_norm(A) -> float:
    if sp.issparse(A):
        return float(abs(A).sum(axis=1).max())
    return float(np.abs(A).sum(axis=1).max())


def dense_solve(A, b, return_rcond: bool = False):
    """Solve a dense complex system by LU with partial pivoting.

    Raises ``SingularMatrixError`` when the matrix is singular to working
    precision.  With ``return_rcond`` also returns the LAPACK estimate of the
    reciprocal 1-norm condition number.
    """
    A = np.asarray(A, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if A.shape[0] == 0:
        x = np.zeros(b.shape, dtype=complex)
        return (x, 1.0) if return_rcond else x
    rcond = reciprocal_condition(A)
    if rcond < np.finfo(float).eps:
        raise SingularMatrixError(f"matrix singular to working precision (rcond={rcond:.2e})")
    lu, piv = sla.lu_factor(A, check_finite=True)
    x = sla.lu_solve((lu, piv), b)
    return (x, rcond) if return_rcond else x


def reciprocal_condition(A) -> float:
    A = np.asarray(A, dtype=complex)
    if A.shape[0] == 0:
        return 1.0
    anorm = np.abs(A).sum(axis=0).max()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=False)
    if np.any(np.diag(lu) == 0):
        return 0.0
    gecon = sla.get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    return float(rcond)
