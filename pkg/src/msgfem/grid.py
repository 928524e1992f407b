"""Uniform Cartesian Q1 grids on rectangles.

Nodes are numbered row-major, ``idx = j * (nx + 1) + i``; cells likewise
``c = j * nx + i``.  Local node order inside a cell is SW, SE, NE, NW.

Boundary edges are enumerated side by side in the order bottom, right,
top, left, each side running in increasing coordinate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

SIDES = ("bottom", "right", "top", "left")

_NORMALS = {
    "bottom": (0.0, -1.0),
    "right": (1.0, 0.0),
    "top": (0.0, 1.0),
    "left": (-1.0, 0.0),
}


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def hx(self) -> float:
        return (self.x1 - self.x0) / self.nx

    @property
    def hy(self) -> float:
        return (self.y1 - self.y0) / self.ny

    @property
    def h(self) -> float:
        """Cell side length (cells are square)."""
        return self.hx

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_boundary_edges(self) -> int:
        return 2 * (self.nx + self.ny)

    def node_index(self, i, j):
        return np.asarray(j) * (self.nx + 1) + np.asarray(i)

    def node_ij(self, idx):
        idx = np.asarray(idx)
        return idx % (self.nx + 1), idx // (self.nx + 1)

    def node_coords(self, idx=None) -> np.ndarray:
        """Coordinates of nodes ``idx`` (all nodes if omitted), shape (..., 2)."""
        if idx is None:
            idx = np.arange(self.n_nodes)
        i, j = self.node_ij(idx)
        return np.stack([self.x0 + i * self.hx, self.y0 + j * self.hy], axis=-1)

    def cell_nodes(self, cells=None) -> np.ndarray:
        """Global node ids (SW, SE, NE, NW) of the given cells, shape (n, 4)."""
        if cells is None:
            cells = np.arange(self.n_cells)
        cells = np.asarray(cells)
        ci, cj = cells % self.nx, cells // self.nx
        sw = self.node_index(ci, cj)
        return np.stack([sw, sw + 1, sw + self.nx + 2, sw + self.nx + 1], axis=-1)

    def cell_centers(self, cells=None) -> np.ndarray:
        if cells is None:
            cells = np.arange(self.n_cells)
        cells = np.asarray(cells)
        ci, cj = cells % self.nx, cells // self.nx
        return np.stack(
            [self.x0 + (ci + 0.5) * self.hx, self.y0 + (cj + 0.5) * self.hy], axis=-1
        )

    # -- boundary -----------------------------------------------------------

    def side_slice(self, side: str) -> slice:
        """Slice of the boundary-edge enumeration belonging to ``side``."""
        nx, ny = self.nx, self.ny
        starts = {"bottom": 0, "right": nx, "top": nx + ny, "left": 2 * nx + ny}
        lengths = {"bottom": nx, "right": ny, "top": nx, "left": ny}
        return slice(starts[side], starts[side] + lengths[side])

    @property
    def boundary_edges(self) -> "BoundaryEdges":
        return _boundary_edges(self)


@dataclass(frozen=True)
class BoundaryEdges:
    """Arrays describing every edge on the outer boundary."""

    nodes: np.ndarray  # (E, 2) global node ids
    cells: np.ndarray  # (E,) adjacent cell
    side: np.ndarray  # (E,) index into SIDES
    normal: np.ndarray  # (E, 2) outward unit normal


def _boundary_edges(g: Grid) -> BoundaryEdges:
    nx, ny = g.nx, g.ny
    ii, jj = np.arange(nx), np.arange(ny)
    nodes = np.concatenate(
        [
            np.stack([g.node_index(ii, 0), g.node_index(ii + 1, 0)], axis=1),
            np.stack([g.node_index(nx, jj), g.node_index(nx, jj + 1)], axis=1),
            np.stack([g.node_index(ii, ny), g.node_index(ii + 1, ny)], axis=1),
            np.stack([g.node_index(0, jj), g.node_index(0, jj + 1)], axis=1),
        ]
    )
    cells = np.concatenate(
        [ii, jj * nx + (nx - 1), (ny - 1) * nx + ii, jj * nx]
    )
    side = np.repeat(np.arange(4), [nx, ny, nx, ny])
    normal = np.array([_NORMALS[s] for s in SIDES])[side]
    return BoundaryEdges(nodes=nodes, cells=cells, side=side, normal=normal)


def build_grid(nx: int, ny: int, rect) -> Grid:
    """Build a grid of ``nx`` by ``ny`` square cells on ``rect = (x0, y0, x1, y1)``."""
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise GridError(f"cell counts must be positive, got nx={nx}, ny={ny}")
    x0, y0, x1, y1 = (float(v) for v in rect)
    if not (x1 > x0 and y1 > y0):
        raise GridError(f"empty rectangle {rect}")
    g = Grid(nx, ny, x0, y0, x1, y1)
    if abs(g.hx - g.hy) > 1e-12 * g.hx:
        raise GridError(f"non-square cells: hx={g.hx!r}, hy={g.hy!r}")
    return g


def node_coords(g: Grid, idx: int) -> tuple[float, float]:
    if not 0 <= idx < g.n_nodes:
        raise IndexError(f"node index {idx} out of range [0, {g.n_nodes})")
    x, y = g.node_coords(idx)
    return float(x), float(y)


@dataclass(frozen=True)
class BoundaryTags:
    """Dirichlet/Robin tag for every boundary edge (``True`` means Dirichlet)."""

    grid: Grid
    dirichlet: np.ndarray = field(repr=False)

    @property
    def robin(self) -> np.ndarray:
        return ~self.dirichlet

    @property
    def dirichlet_sides(self) -> frozenset:
        return frozenset(
            s for s in SIDES if self.dirichlet[self.grid.side_slice(s)].all()
        )

    def robin_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet)

    def dirichlet_edges(self) -> np.ndarray:
        return np.flatnonzero(self.dirichlet)

    def dirichlet_nodes(self) -> np.ndarray:
        be = self.grid.boundary_edges
        return np.unique(be.nodes[self.dirichlet].ravel())

    def robin_measure(self) -> float:
        return float(np.count_nonzero(~self.dirichlet)) * self.grid.h


def tag_boundary(g: Grid, dirichlet_sides: Iterable[str] = ()) -> BoundaryTags:
    """Tag whole sides as Dirichlet; every other boundary edge is Robin."""
    dirichlet = np.zeros(g.n_boundary_edges, dtype=bool)
    for s in dirichlet_sides:
        if s not in SIDES:
            raise GridError(f"unknown side {s!r}; expected one of {SIDES}")
        dirichlet[g.side_slice(s)] = True
    return BoundaryTags(g, dirichlet)
