"""Local problems on oversampling domains.

For a subdomain ``omega`` inside its oversampling domain ``omega*`` this module
builds the local particular solution (impedance condition with coefficient
``V`` on the artificial boundary) and the optimal local basis: leading
eigenvectors of the chi-weighted energy form restricted to discrete
generalized-harmonic functions, computed from the saddle-point pencil

    [ A   C^H ] [phi]           [ D_chi E_omega D_chi  0 ] [phi]
    [ C    0  ] [ p ]  = 1/lam  [          0           0 ] [ p ]

where ``A`` is the stiffness on omega*, ``C`` the Helmholtz form tested
against functions vanishing on the artificial boundary, and ``E_omega`` the
k-weighted energy matrix on omega.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assemble import (
    EdgeSet,
    apply_source_quadrature,
    boundary_load,
    edge_matrix,
    mass_matrix,
    stiffness_matrix,
)
from .coeffs import ProblemSpec
from .decomp import PartitionOfUnity, Subdomain
from .linalg import EigResult, SingularMatrixError, lu_factor, shift_invert_arnoldi


class LocalProblemError(RuntimeError):
    def __init__(self, subdomain: int, message: str):
        super().__init__(f"subdomain {subdomain}: {message}")
        self.subdomain = subdomain


@dataclass
class LocalOperator:
    subdomain: Subdomain
    k: float
    K: sp.csr_matrix  # stiffness on omega*
    M: sp.csr_matrix  # V^2 mass on omega*
    L2: sp.csr_matrix  # unweighted mass on omega*
    R_rob: sp.csr_matrix  # beta edge mass on the Robin part of d(omega*)
    R_int: sp.csr_matrix  # V edge mass on the artificial boundary
    K_omega: sp.csr_matrix  # stiffness on omega, omega* numbering
    M_omega: sp.csr_matrix  # V^2 mass on omega, omega* numbering
    F: np.ndarray  # local load on omega*
    dof_D: np.ndarray  # omega* nodes not on the Dirichlet boundary
    dof_DI: np.ndarray  # dof_D minus the artificial boundary
    v_max: float

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def B(self) -> sp.csr_matrix:
        k = self.k
        return (self.K - k**2 * self.M - 1j * k * self.R_rob).tocsr()

    @property
    def energy_omega(self) -> sp.csr_matrix:
        return (self.K_omega + self.k**2 * self.M_omega).tocsr()

    @property
    def dof_iface(self) -> np.ndarray:
        """Free dofs on the artificial boundary."""
        return np.setdiff1d(self.dof_D, self.dof_DI)

    def constraint(self) -> sp.csr_matrix:
        """``C = B[DI, D]``: rows of the harmonic constraint."""
        return self.B[self.dof_DI][:, self.dof_D].tocsr()


def local_operator(spec: ProblemSpec, sub: Subdomain) -> LocalOperator:
    star, omega = sub.omega_star, sub.omega
    grid = spec.grid
    parts = sub.star_boundary(spec.tags)
    robin = EdgeSet.from_boundary(grid, parts["robin"])
    iface: EdgeSet = parts["interior"]

    K = stiffness_matrix(star, spec.a.values)
    M = mass_matrix(star, spec.v.values)
    L2 = mass_matrix(star, np.ones(grid.n_cells))
    R_rob = edge_matrix(robin, spec.beta[parts["robin"]], star)
    R_int = edge_matrix(iface, spec.v.values[iface.cells], star)
    K_om = stiffness_matrix(omega, spec.a.values, numbering=star)
    M_om = mass_matrix(omega, spec.v.values, numbering=star)
    F = apply_source_quadrature(spec.f, star) + boundary_load(spec.g, robin, star)

    dnodes = star.local(np.unique(grid.boundary_edges.nodes[parts["dirichlet"]].ravel()))
    inodes = star.local(np.unique(iface.nodes.ravel())) if len(iface) else np.zeros(0, int)
    all_nodes = np.arange(star.n_nodes)
    dof_D = np.setdiff1d(all_nodes, dnodes)
    dof_DI = np.setdiff1d(dof_D, inodes)
    return LocalOperator(sub, spec.k, K, M, L2, R_rob, R_int, K_om, M_om, F,
                         dof_D, dof_DI, spec.v.max)


def solve_particular(op: LocalOperator) -> np.ndarray:
    """Local Helmholtz solution with impedance data on the artificial boundary."""
    k = op.k
    Bp = (op.B - 1j * k * op.R_int).tocsr()
    D = op.dof_D
    try:
        fac = lu_factor(Bp[D][:, D])
    except SingularMatrixError as exc:
        raise LocalProblemError(op.subdomain.index, f"local impedance problem is singular ({exc})")
    psi = np.zeros(op.n, dtype=complex)
    psi[D] = fac.solve(op.F[D])
    return psi


def assemble_evp(op: LocalOperator, chi: np.ndarray):
    """Saddle-point matrix and weighted mass of the local eigenproblem.

    ``chi`` holds the partition-of-unity values on omega* nodes.  Unknowns are
    ordered ``(phi on dof_D, p on dof_DI)``.
    """
    D = op.dof_D
    nDI = len(op.dof_DI)
    A = op.K[D][:, D]
    C = op.constraint()
    Kblk = sp.bmat([[A, C.conj().T], [C, None]], format="csc")
    Dchi = sp.diags(np.asarray(chi, float)[D])
    W = (Dchi @ op.energy_omega[D][:, D] @ Dchi).tocsr()
    Mw = sp.bmat([[W, None], [None, sp.csr_matrix((nDI, nDI))]], format="csr")
    return Kblk, Mw


@dataclass
class LocalBasis:
    subdomain: int
    psi: np.ndarray  # on omega* nodes
    lambdas: np.ndarray  # descending
    phis: np.ndarray  # (omega* nodes, n_loc), A-normalized on omega*
    eig: EigResult | None = field(default=None, repr=False)

    @property
    def n_loc(self) -> int:
        return self.phis.shape[1]

    @property
    def d_n(self) -> np.ndarray:
        """``d_n[n] = sqrt(lambda_{n+1})``: n-width of the first-n space."""
        return np.sqrt(np.clip(self.lambdas, 0.0, None))

    def truncate(self, n_loc: int) -> "LocalBasis":
        return LocalBasis(self.subdomain, self.psi, self.lambdas[:n_loc],
                          self.phis[:, :n_loc], self.eig)


def solve_evp(op: LocalOperator, Kblk, Mw, n_loc: int, tol: float = 1e-8, seed: int = 0,
              max_subspace: int | None = None):
    """Leading ``n_loc`` eigenpairs; returns ``(lambdas, phis, EigResult)``.

    ``phis`` are primal blocks scattered to omega* nodes and normalized to
    unit stiffness energy on omega*; multiplier blocks are dropped.
    """
    D = op.dof_D
    nD = len(D)
    n_avail = nD - len(op.dof_DI)  # dimension of the harmonic space
    n_want = min(n_loc, n_avail)
    if n_want <= 0:
        return np.zeros(0), np.zeros((op.n, 0), complex), None
    try:
        res = shift_invert_arnoldi(Kblk, Mw, n_want, tol=tol, seed=seed,
                                   max_subspace=max_subspace, n_primal=nD)
    except SingularMatrixError as exc:
        raise LocalProblemError(op.subdomain.index, f"eigenproblem matrix is singular ({exc})")
    X = res.eigenvectors[:nD]
    # Rayleigh-Ritz on the computed (harmonic) subspace: makes the pairs
    # exactly real and A-orthonormal.
    A = op.K[D][:, D]
    W = Mw[:nD][:, :nD]
    GA = X.conj().T @ (A @ X)
    GW = X.conj().T @ (W @ X)
    GA = 0.5 * (GA + GA.conj().T)
    GW = 0.5 * (GW + GW.conj().T)
    lam, Y = sla.eigh(GW, GA)
    order = np.argsort(-lam, kind="stable")
    lam, Y = lam[order], Y[:, order]
    Phi = X @ Y
    Phi /= np.sqrt(np.einsum("ij,ij->j", Phi.conj(), A @ Phi).real)[None, :]
    phis = np.zeros((op.n, n_want), dtype=complex)
    phis[D] = Phi
    return lam, phis, res


def compute_local_basis(spec: ProblemSpec, sub: Subdomain, pou: PartitionOfUnity,
                        n_loc: int, tol: float = 1e-8, seed: int = 0) -> LocalBasis:
    op = local_operator(spec, sub)
    psi = solve_particular(op)
    chi = pou.on_region(sub.index, sub.omega_star)
    if n_loc > 0:
        Kblk, Mw = assemble_evp(op, chi)
        lam, phis, res = solve_evp(op, Kblk, Mw, n_loc, tol=tol, seed=seed + sub.index)
    else:
        lam, phis, res = np.zeros(0), np.zeros((op.n, 0), complex), None
    return LocalBasis(sub.index, psi, lam, phis, res)


# -- diagnostics -------------------------------------------------------------------


def harmonic_residual(op: LocalOperator, phi: np.ndarray) -> float:
    """Scaled size of ``B(phi, xi)`` over unit test functions ``xi`` vanishing
    on the artificial boundary."""
    C = op.constraint()
    r = C @ phi[op.dof_D]
    scale = float(abs(C).sum(axis=1).max()) * np.max(np.abs(phi))
    return float(np.max(np.abs(r)) / scale) if r.size else 0.0


def harmonic_extension(op: LocalOperator, boundary_values: np.ndarray) -> np.ndarray:
    """Discrete generalized-harmonic function with given values on the
    artificial-boundary dofs (``op.dof_iface`` order)."""
    B = op.B
    DI, G = op.dof_DI, op.dof_iface
    u = np.zeros(op.n, dtype=complex)
    u[G] = boundary_values
    rhs = -(B[DI][:, G] @ boundary_values)
    try:
        fac = lu_factor(B[DI][:, DI])
    except SingularMatrixError as exc:
        raise LocalProblemError(op.subdomain.index, f"local Dirichlet problem is singular ({exc})")
    u[DI] = fac.solve(rhs)
    return u


def random_harmonic(op: LocalOperator, samples: int, seed: int = 0, kind: str = "smooth",
                    modes: int = 6) -> np.ndarray:
    """Columns of seeded random discrete generalized-harmonic functions.

    ``kind="noise"`` prescribes i.i.d. complex Gaussian boundary values;
    ``kind="smooth"`` uses random cosine series of degree ``modes`` in the
    physical coordinates, so the distribution does not depend on the mesh.
    """
    rng = np.random.default_rng(seed)
    G = op.dof_iface
    star = op.subdomain.omega_star
    xy = star.grid.node_coords(star.nodes[G])
    x0, y0 = star.grid.node_coords(star.nodes[0])
    L = max(star.ncx, star.ncy) * star.grid.h
    out = np.zeros((op.n, samples), dtype=complex)
    p = np.arange(modes + 1)
    cx = np.cos(np.pi * np.outer((xy[:, 0] - x0) / L, p))
    cy = np.cos(np.pi * np.outer((xy[:, 1] - y0) / L, p))
    decay = 1.0 / (1.0 + p[:, None] + p[None, :])
    for s in range(samples):
        if kind == "noise":
            g = rng.standard_normal(len(G)) + 1j * rng.standard_normal(len(G))
        elif kind == "smooth":
            c = (rng.standard_normal((modes + 1, modes + 1))
                 + 1j * rng.standard_normal((modes + 1, modes + 1))) * decay
            g = np.einsum("np,pq,nq->n", cx, c, cy)
        else:
            raise ValueError(f"unknown sample kind {kind!r}")
        out[:, s] = harmonic_extension(op, g)
    return out


def caccioppoli_ratio(op: LocalOperator, samples: int = 50, seed: int = 0,
                      kind: str = "smooth") -> float:
    """Measured constant of the discrete Caccioppoli inequality

        |u|_{A,omega} <= C/delta ||u||_{L2(omega*)} + sqrt(2) k V_max ||u||_{L2(omega*)}

    as the maximum over seeded random generalized-harmonic samples.
    """
    sub = op.subdomain
    delta = sub.delta_star
    h = sub.grid.h
    if not delta > 0 or not math.isfinite(delta):
        raise ValueError(f"subdomain {sub.index}: oversampling distance must be positive and finite")
    limit = min(delta / 2, 1.0 / op.k if op.k > 0 else math.inf)
    if h > limit * (1 + 1e-12):
        raise ValueError(
            f"mesh too coarse: h={h:.4g} exceeds min(delta/2, 1/k)={limit:.4g}"
        )
    U = random_harmonic(op, samples, seed=seed, kind=kind)
    energy = np.sqrt(np.einsum("ij,ij->j", U.conj(), op.K_omega @ U).real)
    l2 = np.sqrt(np.einsum("ij,ij->j", U.conj(), op.L2 @ U).real)
    ratio = (energy - math.sqrt(2) * op.k * op.v_max * l2) * delta / l2
    return float(ratio.max())


def write_eigen_csv(path, bases, extra: dict | None = None) -> None:
    """CSV ``subdomain,n,lambda,d_n`` where ``d_n = sqrt(lambda_{n+1})`` (``nan``
    on the last computed row).  ``extra`` maps a column name to a dict keyed
    by ``(subdomain, n)``."""
    extra = extra or {}
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subdomain", "n", "lambda", "d_n", *extra])
        for b in bases:
            d = b.d_n
            for n, lam in enumerate(b.lambdas, start=1):
                dn = float(d[n]) if n < len(d) else float("nan")
                row = [b.subdomain, n, repr(float(lam)), repr(dn)]
                row += [repr(float(col[(b.subdomain, n)])) for col in extra.values()]
                w.writerow(row)
