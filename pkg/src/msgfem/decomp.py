"""Overlapping box decompositions with oversampling and a partition of unity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assemble import Region
from .grid import BoundaryTags, Grid


class DecompositionError(ValueError):
    pass


def partition(grid: Grid, m_x: int, m_y: int) -> list[Region]:
    """Split the grid into ``m_x * m_y`` equal non-overlapping cell boxes.

    Boxes are ordered row by row from the bottom-left.
    """
    if m_x < 1 or m_y < 1:
        raise DecompositionError(f"subdomain counts must be positive, got {m_x}x{m_y}")
    if grid.nx % m_x:
        raise DecompositionError(f"m_x={m_x} does not divide nx={grid.nx}")
    if grid.ny % m_y:
        raise DecompositionError(f"m_y={m_y} does not divide ny={grid.ny}")
    cx, cy = grid.nx // m_x, grid.ny // m_y
    return [
        Region(grid, p * cx, (p + 1) * cx, q * cy, (q + 1) * cy)
        for q in range(m_y)
        for p in range(m_x)
    ]


def _dilate(r: Region, layers: int) -> Region:
    g = r.grid
    return Region(g, max(r.i0 - layers, 0), min(r.i1 + layers, g.nx),
                  max(r.j0 - layers, 0), min(r.j1 + layers, g.ny))


@dataclass(frozen=True)
class Subdomain:
    index: int
    core: Region
    omega: Region
    omega_star: Region
    overlap_layers: int
    ell: int

    @property
    def grid(self) -> Grid:
        return self.core.grid

    @property
    def H(self) -> float:
        """Side length of the overlapping subdomain."""
        return max(self.omega.ncx, self.omega.ncy) * self.grid.h

    @property
    def H_star(self) -> float:
        return max(self.omega_star.ncx, self.omega_star.ncy) * self.grid.h

    @property
    def delta_star(self) -> float:
        """Distance from omega to the part of the omega* boundary inside the domain."""
        o, s = self.omega, self.omega_star
        on_b = s.side_on_boundary()
        gaps = []
        if not on_b["left"]:
            gaps.append(o.i0 - s.i0)
        if not on_b["right"]:
            gaps.append(s.i1 - o.i1)
        if not on_b["bottom"]:
            gaps.append(o.j0 - s.j0)
        if not on_b["top"]:
            gaps.append(s.j1 - o.j1)
        return min(gaps) * self.grid.h if gaps else float("inf")

    @property
    def is_interior(self) -> bool:
        """True when omega* does not touch the outer boundary."""
        return not any(self.omega_star.side_on_boundary().values())

    def star_boundary(self, tags: BoundaryTags) -> dict:
        """Edges of the omega* boundary split into interior / robin / dirichlet."""
        ids = self.omega_star.boundary_edge_ids()
        return {
            "interior": self.omega_star.interior_edges(),
            "robin": ids[tags.robin[ids]],
            "dirichlet": ids[tags.dirichlet[ids]],
        }


@dataclass(frozen=True)
class SubdomainSet:
    grid: Grid
    subdomains: tuple
    m_x: int
    m_y: int

    def __len__(self) -> int:
        return len(self.subdomains)

    def __iter__(self):
        return iter(self.subdomains)

    def __getitem__(self, i) -> Subdomain:
        return self.subdomains[i]

    def multiplicity(self, which: str = "omega") -> np.ndarray:
        """Number of subdomains containing each cell."""
        count = np.zeros(self.grid.n_cells, dtype=int)
        for s in self.subdomains:
            count[getattr(s, which).cells] += 1
        return count

    def interior_ratio(self) -> float | None:
        """H/H* of an interior subdomain (None if there is none)."""
        for s in self.subdomains:
            if s.is_interior:
                return s.H / s.H_star
        return None


def overlap_and_oversample(cores, overlap_layers: int = 2, ell: int = 0,
                           m_x: int | None = None, m_y: int | None = None) -> SubdomainSet:
    if overlap_layers < 1:
        raise DecompositionError("overlap_layers must be at least 1")
    if ell < 0:
        raise DecompositionError("ell must be non-negative")
    cores = list(cores)
    grid = cores[0].grid
    subs = []
    for idx, core in enumerate(cores):
        omega = _dilate(core, overlap_layers)
        subs.append(Subdomain(idx, core, omega, _dilate(omega, ell), overlap_layers, ell))
    sset = SubdomainSet(grid, tuple(subs), m_x or 0, m_y or 0)
    mult = sset.multiplicity("omega")
    if mult.min() < 1:
        raise DecompositionError("subdomains do not cover the grid")
    if mult.max() > 4:
        raise DecompositionError(
            f"cell multiplicity {mult.max()} exceeds 4; cores are too small for the overlap"
        )
    return sset


def decompose(grid: Grid, m_x: int, m_y: int, overlap_layers: int = 2, ell: int = 0) -> SubdomainSet:
    return overlap_and_oversample(partition(grid, m_x, m_y), overlap_layers, ell, m_x, m_y)


@dataclass(frozen=True)
class PartitionOfUnity:
    subdomains: SubdomainSet
    chi: tuple  # per subdomain, values on omega nodes (Region.nodes order)

    def global_values(self, i: int) -> np.ndarray:
        out = np.zeros(self.subdomains.grid.n_nodes)
        out[self.subdomains[i].omega.nodes] = self.chi[i]
        return out

    def on_region(self, i: int, region: Region) -> np.ndarray:
        """chi_i on the nodes of ``region`` (zero outside omega_i)."""
        return self.global_values(i)[region.nodes]

    def total(self) -> np.ndarray:
        out = np.zeros(self.subdomains.grid.n_nodes)
        for i, s in enumerate(self.subdomains):
            out[s.omega.nodes] += self.chi[i]
        return out


def _ramp_weights(s: Subdomain) -> np.ndarray:
    o = s.omega
    ni, nj = np.meshgrid(np.arange(o.i0, o.i1 + 1), np.arange(o.j0, o.j1 + 1))
    ni, nj = ni.ravel(), nj.ravel()
    on_b = o.side_on_boundary()
    dist = np.full(ni.shape, np.inf)
    if not on_b["left"]:
        dist = np.minimum(dist, ni - o.i0)
    if not on_b["right"]:
        dist = np.minimum(dist, o.i1 - ni)
    if not on_b["bottom"]:
        dist = np.minimum(dist, nj - o.j0)
    if not on_b["top"]:
        dist = np.minimum(dist, o.j1 - nj)
    width = 2 * s.overlap_layers
    return np.minimum(1.0, dist / width)


def build_pou(subdomains: SubdomainSet) -> PartitionOfUnity:
    """Normalized distance ramps: ``chi_i = w_i / sum_j w_j`` where ``w_i``
    rises linearly from 0 on the interior boundary of omega_i to 1 at a
    distance of one full overlap width."""
    grid = subdomains.grid
    weights = [_ramp_weights(s) for s in subdomains]
    total = np.zeros(grid.n_nodes)
    for s, w in zip(subdomains, weights):
        total[s.omega.nodes] += w
    if np.any(total <= 0):
        raise AssertionError("partition of unity weights vanish at some node")
    chi = tuple(w / total[s.omega.nodes] for s, w in zip(subdomains, weights))
    return PartitionOfUnity(subdomains, chi)
