"""Global coarse space, coarse Galerkin solve and fine reference solve."""
from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .assemble import AssembledForms, assemble_forms
from .coeffs import ProblemSpec
from .decomp import PartitionOfUnity, SubdomainSet, build_pou, decompose
from .linalg import SingularMatrixError, dense_solve, lu_factor, reciprocal_condition
from .local import LocalBasis, LocalProblemError, compute_local_basis

RCOND_FLOOR = 1e-12


@dataclass
class Solution:
    u: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.u)):
            raise FloatingPointError("solution has non-finite entries")


def solve_fine(forms: AssembledForms) -> Solution:
    """Standard FE solution on the whole region (zero Dirichlet data)."""
    t0 = time.perf_counter()
    B, F = forms.reduced()
    try:
        fac = lu_factor(B)
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"fine Helmholtz matrix is singular: {exc}") from None
    uf = fac.solve(F)
    resid = np.linalg.norm(B @ uf - F) / max(np.linalg.norm(F), 1e-300)
    if np.linalg.norm(F) > 0 and resid > 1e-10:
        raise SingularMatrixError(f"fine solve residual {resid:.2e} exceeds 1e-10")
    return Solution(forms.expand(uf), {"kind": "fine", "k": forms.k, "residual": float(resid),
                                       "seconds": time.perf_counter() - t0})


@dataclass
class CoarseSpace:
    Z: sp.csc_matrix  # fine nodes x coarse dofs
    u_p: np.ndarray
    columns: list  # (subdomain, eigen index) per column, eigen index 1-based
    lambdas: np.ndarray  # eigenvalue attached to each column

    @property
    def dim(self) -> int:
        return self.Z.shape[1]


def build_coarse(bases, pou: PartitionOfUnity, subdomains: SubdomainSet) -> CoarseSpace:
    """Glue local particular functions and eigenvectors with the partition of unity."""
    grid = subdomains.grid
    u_p = np.zeros(grid.n_nodes, dtype=complex)
    rows, cols, vals = [], [], []
    colmap, lams = [], []
    c = 0
    for b in bases:
        sub = subdomains[b.subdomain]
        star = sub.omega_star
        chi = pou.on_region(sub.index, star)
        support = np.flatnonzero(chi)
        gnodes = star.nodes[support]
        u_p[gnodes] += chi[support] * b.psi[support]
        for j in range(b.n_loc):
            col = chi[support] * b.phis[support, j]
            nz = col != 0
            rows.append(gnodes[nz])
            cols.append(np.full(np.count_nonzero(nz), c))
            vals.append(col[nz])
            colmap.append((sub.index, j + 1))
            lams.append(b.lambdas[j])
            c += 1
    if c:
        Z = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(grid.n_nodes, c))
    else:
        Z = sp.csc_matrix((grid.n_nodes, 0), dtype=complex)
    Z.sort_indices()
    return CoarseSpace(Z, u_p, colmap, np.asarray(lams, float))


def _unit_energy_columns(Z, forms: AssembledForms) -> sp.csc_matrix:
    """``Z`` with every column scaled to unit ``||.||_{A,k}`` energy."""
    E = forms.energy_matrix()
    energy = np.asarray(Z.conj().multiply(E @ Z).sum(axis=0)).ravel().real
    scale = np.sqrt(np.where(energy > 0, energy, 1.0))
    return (Z @ sp.diags(1.0 / scale)).tocsc()


def _drop_trailing(cs: CoarseSpace, keep: np.ndarray) -> np.ndarray:
    """Drop the last kept column of every subdomain (smallest eigenvalue)."""
    keep = keep.copy()
    last = {}
    for idx in np.flatnonzero(keep):
        last[cs.columns[idx][0]] = idx
    keep[list(last.values())] = False
    return keep


def solve_coarse(cs: CoarseSpace, forms: AssembledForms) -> Solution:
    """Galerkin solution in ``u_p + span(Z)``: ``(Z^H B Z) c = Z^H (F - B u_p)``.

    Columns are scaled to unit energy before the dense solve.  While the
    estimated reciprocal condition number stays below ``RCOND_FLOOR`` the
    trailing column of every subdomain is dropped.
    """
    t0 = time.perf_counter()
    B = forms.B
    r = forms.F - B @ cs.u_p
    fixed = np.zeros(forms.n, dtype=bool)
    fixed[forms.dirichlet_nodes] = True
    r[fixed] = 0.0
    Z = cs.Z
    if cs.dim == 0:
        return Solution(cs.u_p.copy(), {"kind": "coarse", "dim": 0, "dropped": 0, "rcond": 1.0,
                                        "seconds": time.perf_counter() - t0})
    Zs = _unit_energy_columns(Z, forms)
    BZ = (B @ Zs).tocsc()
    Ac_full = (Zs.conj().T @ BZ).toarray()
    bc_full = Zs.conj().T @ r

    keep = np.ones(cs.dim, dtype=bool)
    dropped = 0
    while True:
        idx = np.flatnonzero(keep)
        Ac = Ac_full[np.ix_(idx, idx)]
        rcond = reciprocal_condition(Ac) if idx.size else 1.0
        if rcond >= RCOND_FLOOR or idx.size == 0:
            break
        keep = _drop_trailing(cs, keep)
        dropped = cs.dim - int(keep.sum())
    idx = np.flatnonzero(keep)
    c = dense_solve(Ac_full[np.ix_(idx, idx)], bc_full[idx]) if idx.size else np.zeros(0)
    u = cs.u_p + Zs[:, idx] @ c
    meta = {"kind": "coarse", "dim": int(idx.size), "dropped": dropped, "rcond": rcond,
            "seconds": time.perf_counter() - t0}
    return Solution(u, meta)


def galerkin_residual(cs: CoarseSpace, forms: AssembledForms, u_fine, u_coarse) -> float:
    """``||Z^H B (u_fine - u_coarse)||_inf / ||Z^H B u_fine||_inf`` (test functions
    scaled to unit energy)."""
    if cs.dim == 0:
        return 0.0
    Zs = _unit_energy_columns(cs.Z, forms)
    num = np.abs(Zs.conj().T @ (forms.B @ (u_fine - u_coarse))).max()
    den = np.abs(Zs.conj().T @ (forms.B @ u_fine)).max()
    return float(num / den) if den > 0 else float(num)


def prolong(sol: Solution) -> np.ndarray:
    """Fine nodal vector of a coarse solution (already stored on fine nodes)."""
    return sol.u


# -- pipeline ----------------------------------------------------------------------


@dataclass
class Diagnostics:
    subdomains: SubdomainSet
    pou: PartitionOfUnity
    bases: list
    coarse: CoarseSpace
    timings: dict
    coarse_meta: dict

    def eigen_table(self) -> list:
        return [(b.subdomain, n + 1, float(l)) for b in self.bases for n, l in enumerate(b.lambdas)]


def compute_local_bases(spec: ProblemSpec, subdomains: SubdomainSet, pou: PartitionOfUnity,
                        n_loc: int, tol: float = 1e-8, seed: int = 0,
                        workers: int = 1) -> list:
    """Local bases for every subdomain, in subdomain order."""

    def job(sub):
        return compute_local_basis(spec, sub, pou, n_loc, tol=tol, seed=seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(job, subdomains))
    return [job(s) for s in subdomains]


def msgfem_pipeline(spec: ProblemSpec, m_x: int, m_y: int, overlap: int = 2, ell: int = 0,
                    n_loc: int = 20, tol: float = 1e-8, seed: int = 0, workers: int = 1,
                    forms: AssembledForms | None = None, bases=None):
    """Decompose, solve all local problems, glue and solve the coarse problem.

    Returns ``(Solution, Diagnostics)``.  Precomputed ``bases`` with at least
    ``n_loc`` eigenpairs per subdomain are truncated and reused.
    """
    spec.check_well_posed()
    timings = {}
    t = time.perf_counter()
    sset = decompose(spec.grid, m_x, m_y, overlap, ell)
    pou = build_pou(sset)
    timings["decomp"] = time.perf_counter() - t
    forms = forms or assemble_forms(spec)

    t = time.perf_counter()
    if bases is None:
        bases = compute_local_bases(spec, sset, pou, n_loc, tol=tol, seed=seed, workers=workers)
    else:
        bases = [b.truncate(n_loc) for b in bases]
    timings["local"] = time.perf_counter() - t

    t = time.perf_counter()
    cs = build_coarse(bases, pou, sset)
    sol = solve_coarse(cs, forms)
    timings["coarse"] = time.perf_counter() - t
    sol.meta.update({"k": spec.k, "n_loc": n_loc, "ell": ell, "m_x": m_x, "m_y": m_y,
                     "overlap": overlap, "tol": tol, "seed": seed, "timings": timings})
    return sol, Diagnostics(sset, pou, bases, cs, timings, sol.meta)


def write_solution_csv(path, grid, u: np.ndarray) -> None:
    xy = grid.node_coords()
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_index", "x", "y", "re", "im"])
        for i in range(grid.n_nodes):
            w.writerow([i, repr(float(xy[i, 0])), repr(float(xy[i, 1])),
                        repr(float(u[i].real)), repr(float(u[i].imag))])


__all__ = [
    "CoarseSpace", "Diagnostics", "LocalBasis", "LocalProblemError", "Solution",
    "build_coarse", "compute_local_bases", "galerkin_residual", "msgfem_pipeline",
    "prolong", "solve_coarse", "solve_fine", "write_solution_csv",
]
