"""Q1 assembly of the Helmholtz sesquilinear forms.

Convention: a matrix ``B`` represents the form ``B(u, v) = v^H B u``, the
second argument being conjugated.  All element matrices are real, so the
assembled stiffness and mass matrices are real symmetric (stored complex).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .coeffs import ProblemSpec
from .grid import Grid

_GAUSS = np.array([-1.0, 1.0]) / np.sqrt(3.0)

_K_REF = np.array(
    [[4, -1, -2, -1], [-1, 4, -1, -2], [-2, -1, 4, -1], [-1, -2, -1, 4]], dtype=float
) / 6.0
_M_REF = np.array(
    [[4, 2, 1, 2], [2, 4, 2, 1], [1, 2, 4, 2], [2, 1, 2, 4]], dtype=float
) / 36.0
_E_REF = np.array([[2, 1], [1, 2]], dtype=float) / 6.0


def element_stiffness(a_cell: float, h: float) -> np.ndarray:
    """``int a grad(phi_q) . grad(phi_p)`` on a square cell; independent of h in 2D."""
    return a_cell * _K_REF


def element_mass(v_cell: float, h: float) -> np.ndarray:
    return v_cell**2 * h**2 * _M_REF


def edge_mass(beta_edge: float, h: float) -> np.ndarray:
    return beta_edge * h * _E_REF


# -- regions and edge sets ----------------------------------------------------


@dataclass(frozen=True)
class Region:
    """Box of cells ``[i0, i1) x [j0, j1)`` of a grid."""

    grid: Grid
    i0: int
    i1: int
    j0: int
    j1: int

    def __post_init__(self):
        g = self.grid
        if not (0 <= self.i0 < self.i1 <= g.nx and 0 <= self.j0 < self.j1 <= g.ny):
            raise ValueError(f"invalid cell box {self.box} for a {g.nx}x{g.ny} grid")

    @classmethod
    def whole(cls, grid: Grid) -> "Region":
        return cls(grid, 0, grid.nx, 0, grid.ny)

    @property
    def box(self) -> tuple:
        return (self.i0, self.i1, self.j0, self.j1)

    @property
    def ncx(self) -> int:
        return self.i1 - self.i0

    @property
    def ncy(self) -> int:
        return self.j1 - self.j0

    @property
    def n_nodes(self) -> int:
        return (self.ncx + 1) * (self.ncy + 1)

    @property
    def cells(self) -> np.ndarray:
        ci, cj = np.meshgrid(np.arange(self.i0, self.i1), np.arange(self.j0, self.j1))
        return (cj * self.grid.nx + ci).ravel()

    @property
    def nodes(self) -> np.ndarray:
        """Global ids of the region's nodes, ascending."""
        ni, nj = np.meshgrid(np.arange(self.i0, self.i1 + 1), np.arange(self.j0, self.j1 + 1))
        return self.grid.node_index(ni, nj).ravel()

    def local(self, global_nodes) -> np.ndarray:
        """Local index of global node ids (must lie in the region)."""
        i, j = self.grid.node_ij(np.asarray(global_nodes))
        if np.any((i < self.i0) | (i > self.i1) | (j < self.j0) | (j > self.j1)):
            raise ValueError("node outside region")
        return (j - self.j0) * (self.ncx + 1) + (i - self.i0)

    def contains_cells(self, cells) -> np.ndarray:
        cells = np.asarray(cells)
        ci, cj = cells % self.grid.nx, cells // self.grid.nx
        return (ci >= self.i0) & (ci < self.i1) & (cj >= self.j0) & (cj < self.j1)

    def contains_box(self, other: "Region") -> bool:
        return (self.i0 <= other.i0 and other.i1 <= self.i1
                and self.j0 <= other.j0 and other.j1 <= self.j1)

    def side_on_boundary(self) -> dict:
        g = self.grid
        return {"bottom": self.j0 == 0, "right": self.i1 == g.nx,
                "top": self.j1 == g.ny, "left": self.i0 == 0}

    def boundary_edge_ids(self) -> np.ndarray:
        """Indices (into the grid's boundary-edge list) of outer edges of this region."""
        be = self.grid.boundary_edges
        return np.flatnonzero(self.contains_cells(be.cells))

    def interior_edges(self) -> "EdgeSet":
        """Edges of the region boundary lying inside the domain."""
        g = self.grid
        on_b = self.side_on_boundary()
        nodes, cells, normals = [], [], []
        ii, jj = np.arange(self.i0, self.i1), np.arange(self.j0, self.j1)
        if not on_b["bottom"]:
            nodes.append(np.stack([g.node_index(ii, self.j0), g.node_index(ii + 1, self.j0)], 1))
            cells.append(self.j0 * g.nx + ii)
            normals.append(np.tile([0.0, -1.0], (ii.size, 1)))
        if not on_b["right"]:
            nodes.append(np.stack([g.node_index(self.i1, jj), g.node_index(self.i1, jj + 1)], 1))
            cells.append(jj * g.nx + self.i1 - 1)
            normals.append(np.tile([1.0, 0.0], (jj.size, 1)))
        if not on_b["top"]:
            nodes.append(np.stack([g.node_index(ii, self.j1), g.node_index(ii + 1, self.j1)], 1))
            cells.append((self.j1 - 1) * g.nx + ii)
            normals.append(np.tile([0.0, 1.0], (ii.size, 1)))
        if not on_b["left"]:
            nodes.append(np.stack([g.node_index(self.i0, jj), g.node_index(self.i0, jj + 1)], 1))
            cells.append(jj * g.nx + self.i0)
            normals.append(np.tile([-1.0, 0.0], (jj.size, 1)))
        if not nodes:
            return EdgeSet.empty()
        return EdgeSet(np.concatenate(nodes), np.concatenate(cells), np.concatenate(normals))

    def interior_boundary_nodes(self) -> np.ndarray:
        """Global ids of nodes on the closure of the region boundary inside the domain."""
        return np.unique(self.interior_edges().nodes.ravel())


@dataclass(frozen=True)
class EdgeSet:
    nodes: np.ndarray  # (E, 2)
    cells: np.ndarray  # (E,) adjacent cell inside the region
    normal: np.ndarray  # (E, 2) outward normal

    @classmethod
    def empty(cls) -> "EdgeSet":
        return cls(np.zeros((0, 2), int), np.zeros(0, int), np.zeros((0, 2)))

    @classmethod
    def from_boundary(cls, grid: Grid, edge_ids) -> "EdgeSet":
        be = grid.boundary_edges
        edge_ids = np.asarray(edge_ids, dtype=int)
        return cls(be.nodes[edge_ids], be.cells[edge_ids], be.normal[edge_ids])

    def __len__(self) -> int:
        return len(self.cells)


# -- sparse assembly ---------------------------------------------------------------


def _coo_to_csr(rows, cols, vals, n) -> sp.csr_matrix:
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    A.eliminate_zeros()
    return A.astype(complex)


def _cell_matrix(region: Region, cells, weights, ref, numbering: Region) -> sp.csr_matrix:
    g = region.grid
    loc = numbering.local(g.cell_nodes(cells))  # (n, 4)
    rows = np.repeat(loc, 4, axis=1).ravel()
    cols = np.tile(loc, (1, 4)).ravel()
    vals = (weights[:, None, None] * ref[None]).ravel()
    return _coo_to_csr(rows, cols, vals, numbering.n_nodes)


def stiffness_matrix(region: Region, a_values, numbering: Optional[Region] = None) -> sp.csr_matrix:
    """``K[p, q] = int_region a grad(phi_q) . grad(phi_p)``."""
    numbering = numbering or region
    cells = region.cells
    return _cell_matrix(region, cells, np.asarray(a_values)[cells], _K_REF, numbering)


def mass_matrix(region: Region, v_values, numbering: Optional[Region] = None) -> sp.csr_matrix:
    """``M[p, q] = int_region V^2 phi_q phi_p``."""
    numbering = numbering or region
    cells = region.cells
    h = region.grid.h
    w = np.asarray(v_values)[cells] ** 2 * h**2
    return _cell_matrix(region, cells, w, _M_REF, numbering)


def edge_matrix(edges: EdgeSet, weights, numbering: Region) -> sp.csr_matrix:
    """``R[p, q] = int_edges w phi_q phi_p`` with one weight per edge."""
    n = numbering.n_nodes
    if len(edges) == 0:
        return sp.csr_matrix((n, n), dtype=complex)
    h = numbering.grid.h
    loc = numbering.local(edges.nodes)
    rows = np.repeat(loc, 2, axis=1).ravel()
    cols = np.tile(loc, (1, 2)).ravel()
    vals = (np.asarray(weights, float)[:, None, None] * h * _E_REF[None]).ravel()
    return _coo_to_csr(rows, cols, vals, n)


def apply_source_quadrature(f: Optional[Callable], region: Region,
                            numbering: Optional[Region] = None) -> np.ndarray:
    """Load vector ``int_region f conj(phi_p)`` with 2x2 Gauss points per cell."""
    numbering = numbering or region
    F = np.zeros(numbering.n_nodes, dtype=complex)
    if f is None:
        return F
    g = region.grid
    h = g.h
    cells = region.cells
    loc = numbering.local(g.cell_nodes(cells))
    sw = g.node_coords(g.cell_nodes(cells)[:, 0])
    for s in _GAUSS:
        for t in _GAUSS:
            xi, eta = 0.5 * (1 + s), 0.5 * (1 + t)
            shape = np.array([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta])
            fv = np.asarray(f(sw[:, 0] + xi * h, sw[:, 1] + eta * h), dtype=complex)
            contrib = (0.25 * h * h) * fv[:, None] * shape[None, :]
            np.add.at(F, loc.ravel(), contrib.ravel())
    return F


def boundary_load(g_fn: Optional[Callable], edges: EdgeSet, numbering: Region) -> np.ndarray:
    """``int_edges g conj(phi_p)`` with 2 Gauss points per edge."""
    F = np.zeros(numbering.n_nodes, dtype=complex)
    if g_fn is None or len(edges) == 0:
        return F
    grid = numbering.grid
    h = grid.h
    loc = numbering.local(edges.nodes)
    p0 = grid.node_coords(edges.nodes[:, 0])
    p1 = grid.node_coords(edges.nodes[:, 1])
    for s in _GAUSS:
        t = 0.5 * (1 + s)
        pt = (1 - t) * p0 + t * p1
        gv = np.asarray(g_fn(pt[:, 0], pt[:, 1], edges.normal[:, 0], edges.normal[:, 1]),
                        dtype=complex)
        contrib = (0.5 * h) * gv[:, None] * np.array([1 - t, t])[None, :]
        np.add.at(F, loc.ravel(), contrib.ravel())
    return F


def interpolate(evaluator: Callable, grid: Grid, nodes=None) -> np.ndarray:
    """Nodal (Lagrange) interpolant of ``evaluator(x, y)``."""
    xy = grid.node_coords(nodes)
    return np.asarray(evaluator(xy[..., 0], xy[..., 1]), dtype=complex) * np.ones(len(xy))


# -- assembled problem ----------------------------------------------------------


@dataclass
class AssembledForms:
    """Stiffness ``K``, weighted mass ``M``, Robin mass ``R`` and
    ``B = K - k^2 M - i k R`` on a region, plus the load vector.

    Matrices are stored on all region nodes; Dirichlet nodes are eliminated
    symmetrically through ``free``.
    """

    region: Region
    k: float
    K: sp.csr_matrix
    M: sp.csr_matrix
    R: sp.csr_matrix
    B: sp.csr_matrix
    F: np.ndarray
    dirichlet_nodes: np.ndarray  # local indices

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.dirichlet_nodes] = False
        return np.flatnonzero(mask)

    def reduced(self):
        """``(B_ff, F_f)`` on free nodes (zero Dirichlet data)."""
        fr = self.free
        return self.B[fr][:, fr].tocsc(), self.F[fr]

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        u = np.zeros(self.n, dtype=complex)
        u[self.free] = u_free
        return u

    def energy_matrix(self) -> sp.csr_matrix:
        return (self.K + self.k**2 * self.M).tocsr()


def assemble_forms(spec: ProblemSpec, region: Optional[Region] = None,
                   robin_edges=None) -> AssembledForms:
    """Assemble all forms of ``spec`` on ``region`` (default: whole grid).

    ``robin_edges`` are boundary-edge ids; by default the Robin edges of the
    problem that bound the region.
    """
    grid = spec.grid
    region = region or Region.whole(grid)
    own = region.boundary_edge_ids()
    if robin_edges is None:
        robin_edges = own[spec.tags.robin[own]]
    else:
        robin_edges = np.asarray(robin_edges, dtype=int)
        if not np.all(np.isin(robin_edges, own)):
            raise ValueError("robin_edges must bound the region")
    edges = EdgeSet.from_boundary(grid, robin_edges)

    K = stiffness_matrix(region, spec.a.values)
    M = mass_matrix(region, spec.v.values)
    R = edge_matrix(edges, spec.beta[robin_edges], region)
    k = spec.k
    B = (K - k**2 * M - 1j * k * R).tocsr()
    B.sort_indices()
    F = apply_source_quadrature(spec.f, region) + boundary_load(spec.g, edges, region)

    dir_edges = own[spec.tags.dirichlet[own]]
    dnodes = np.unique(grid.boundary_edges.nodes[dir_edges].ravel())
    return AssembledForms(region, k, K, M, R, B, F, region.local(dnodes).astype(int))
