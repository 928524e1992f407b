"""Coefficient fields, source data and named problem setups."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .grid import BoundaryTags, Grid, build_grid, tag_boundary

# f(x, y) -> complex array;  g(x, y, n_x, n_y) -> complex array
VolumeSource = Callable[[np.ndarray, np.ndarray], np.ndarray]
BoundarySource = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


class CoefficientError(ValueError):
    pass


@dataclass(frozen=True)
class CellField:
    """Piecewise-constant positive field, one value per grid cell."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if vals.size != self.grid.n_cells:
            raise CoefficientError(
                f"field has {vals.size} values, grid has {self.grid.n_cells} cells"
            )
        if not np.all(vals > 0) or not np.all(np.isfinite(vals)):
            raise CoefficientError("cell field values must be finite and positive")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def min(self) -> float:
        return float(self.values.min())

    @property
    def max(self) -> float:
        return float(self.values.max())

    def as_image(self) -> np.ndarray:
        """Values reshaped to (ny, nx), row 0 at the bottom."""
        return self.values.reshape(self.grid.ny, self.grid.nx)


def constant_field(grid: Grid, value: float) -> CellField:
    if not value > 0:
        raise CoefficientError(f"field value must be positive, got {value}")
    return CellField(grid, np.full(grid.n_cells, float(value)))


def indicator_field(grid: Grid, background: float, inclusions=()) -> CellField:
    """Background value overridden by rectangular inclusions.

    ``inclusions`` is a sequence of ``((x0, y0, x1, y1), value)``; a cell takes
    the value of the last inclusion containing its center.
    """
    if not background > 0:
        raise CoefficientError(f"background must be positive, got {background}")
    vals = np.full(grid.n_cells, float(background))
    xc, yc = grid.cell_centers().T
    for (rx0, ry0, rx1, ry1), value in inclusions:
        if not value > 0:
            raise CoefficientError(f"inclusion value must be positive, got {value}")
        inside = (xc >= rx0) & (xc <= rx1) & (yc >= ry0) & (yc <= ry1)
        vals[inside] = value
    return CellField(grid, vals)


# -- velocity files ---------------------------------------------------------


def read_velocity_file(path) -> np.ndarray:
    """Raw velocities as an array of shape (nvy, nvx), row 0 at the bottom."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"velocity file not found: {path}")
    tokens = path.read_text().split()
    try:
        nvx, nvy = int(tokens[0]), int(tokens[1])
    except (IndexError, ValueError):
        raise CoefficientError(f"{path}: malformed header, expected 'nvx nvy'") from None
    if nvx < 1 or nvy < 1:
        raise CoefficientError(f"{path}: malformed header {tokens[:2]}")
    body = tokens[2:]
    if len(body) != nvx * nvy:
        raise CoefficientError(
            f"{path}: expected {nvx * nvy} velocities, found {len(body)}"
        )
    try:
        v = np.array([float(t) for t in body])
    except ValueError as exc:
        raise CoefficientError(f"{path}: {exc}") from None
    if not np.all(v > 0) or not np.all(np.isfinite(v)):
        raise CoefficientError(f"{path}: velocities must be finite and positive")
    return v.reshape(nvy, nvx)


def write_velocity_file(path, velocities: np.ndarray) -> None:
    velocities = np.asarray(velocities, dtype=float)
    nvy, nvx = velocities.shape
    lines = [f"{nvx} {nvy}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in velocities]
    Path(path).write_text("\n".join(lines) + "\n")


def read_velocity_grid(path, grid: Grid) -> CellField:
    """Slowness field ``V = 1/v`` on ``grid`` from a velocity file.

    Coarser velocity grids are resampled by nearest-cell lookup.
    """
    v = read_velocity_file(path)
    nvy, nvx = v.shape
    if nvx > grid.nx or nvy > grid.ny:
        raise CoefficientError(
            f"velocity grid {nvx}x{nvy} is finer than the mesh {grid.nx}x{grid.ny}"
        )
    iv = ((np.arange(grid.nx) + 0.5) * nvx / grid.nx).astype(int)
    jv = ((np.arange(grid.ny) + 0.5) * nvy / grid.ny).astype(int)
    resampled = v[np.ix_(jv, iv)]
    return CellField(grid, 1.0 / resampled.ravel())


def layered_velocity(nvx: int, nvy: int, rect, seed: int = 0) -> np.ndarray:
    """Synthetic layered velocity model (km/s) with dipping interfaces and a
    low-velocity lens, used in place of the Marmousi data for desk runs."""
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = rect
    xc = x0 + (np.arange(nvx) + 0.5) * (x1 - x0) / nvx
    yc = y0 + (np.arange(nvy) + 0.5) * (y1 - y0) / nvy
    X, Y = np.meshgrid(xc, yc)
    depth = (y1 - Y) / (y1 - y0)
    n_layers = 8
    tilt = rng.uniform(-0.08, 0.08, n_layers)
    bumps = rng.uniform(0.0, 2 * np.pi, n_layers)
    speeds = np.linspace(1.5, 5.5, n_layers + 1)
    v = np.full(X.shape, speeds[0])
    for layer in range(n_layers):
        level = (layer + 1) / (n_layers + 1)
        iface = (
            level
            + tilt[layer] * (X - x0) / (x1 - x0)
            + 0.03 * np.sin(2 * np.pi * (X - x0) / (x1 - x0) * 2 + bumps[layer])
        )
        v[depth > iface] = speeds[layer + 1]
    lens = ((X - (x0 + 0.35 * (x1 - x0))) / 1.2) ** 2 + ((depth - 0.55) / 0.08) ** 2 < 1
    v[lens] = 2.2
    return v


# -- analytic data ------------------------------------------------------------


@dataclass(frozen=True)
class PlaneWave:
    """``u(x) = exp(i k d.x)`` with unit direction ``d``."""

    k: float
    direction: tuple

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (2,) or abs(np.hypot(*d) - 1.0) > 1e-12:
            raise CoefficientError(f"direction must be a unit 2-vector, got {self.direction}")

    @property
    def wave_vector(self) -> np.ndarray:
        return self.k * np.asarray(self.direction, dtype=float)

    def u(self, x, y):
        kx, ky = self.wave_vector
        return np.exp(1j * (kx * np.asarray(x) + ky * np.asarray(y)))

    def grad(self, x, y):
        kx, ky = self.wave_vector
        u = self.u(x, y)
        return 1j * kx * u, 1j * ky * u

    def g(self, x, y, nx, ny):
        """First-order absorbing data ``n.grad(u) - i k u``."""
        kx, ky = self.wave_vector
        return (1j * (kx * np.asarray(nx) + ky * np.asarray(ny)) - 1j * self.k) * self.u(x, y)


def plane_wave_data(k: float, direction) -> tuple:
    pw = PlaneWave(float(k), tuple(direction))
    return pw.u, pw.g


def gaussian_source(center, sharpness: float) -> VolumeSource:
    if not sharpness > 0:
        raise CoefficientError(f"sharpness must be positive, got {sharpness}")
    cx, cy = (float(c) for c in center)

    def f(x, y):
        r2 = (np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2
        return np.exp(-sharpness * r2).astype(complex)

    return f


# -- problem ------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemSpec:
    """Data of the heterogeneous Helmholtz problem

    ``-div(a grad u) - k^2 V^2 u = f`` in the domain, ``u = 0`` on Dirichlet
    edges and ``a du/dn - i k beta u = g`` on Robin edges.
    """

    grid: Grid
    a: CellField
    v: CellField
    beta: np.ndarray = field(repr=False)  # one value per boundary edge
    k: float
    tags: BoundaryTags
    f: Optional[VolumeSource] = None
    g: Optional[BoundarySource] = None
    name: str = "custom"

    def __post_init__(self):
        beta = np.broadcast_to(
            np.asarray(self.beta, dtype=float), (self.grid.n_boundary_edges,)
        ).copy()
        object.__setattr__(self, "beta", beta)
        if self.k < 0:
            raise CoefficientError(f"wavenumber must be non-negative, got {self.k}")
        if np.any(beta[self.tags.robin] <= 0):
            raise CoefficientError("beta must be positive on Robin edges")

    def check_well_posed(self) -> None:
        if not self.k > 0:
            raise CoefficientError(f"wavenumber must be positive, got {self.k}")
        if self.tags.robin_measure() <= 0:
            raise CoefficientError("the Robin boundary must have positive measure")

    @property
    def v_max(self) -> float:
        return self.v.max

    def replace(self, **changes) -> "ProblemSpec":
        from dataclasses import replace

        return replace(self, **changes)


def plane_wave_problem(n: int, k: float, direction=(0.6, 0.8)) -> tuple[ProblemSpec, PlaneWave]:
    """Unit square, impedance on the whole boundary, exact plane-wave solution."""
    grid = build_grid(n, n, (0.0, 0.0, 1.0, 1.0))
    pw = PlaneWave(float(k), tuple(direction))
    spec = ProblemSpec(
        grid=grid,
        a=constant_field(grid, 1.0),
        v=constant_field(grid, 1.0),
        beta=1.0,
        k=float(k),
        tags=tag_boundary(grid, ()),
        f=None,
        g=pw.g,
        name="plane-wave",
    )
    return spec, pw


SCATTERER_LAYOUT = (
    ((0.20, 0.55, 0.35, 0.80), 10.0),
    ((0.45, 0.20, 0.60, 0.40), 0.1),
    ((0.62, 0.60, 0.82, 0.72), 10.0),
    ((0.28, 0.28, 0.36, 0.44), 5.0),
    ((0.70, 0.25, 0.78, 0.48), 0.2),
)


def scattering_problem(
    n: int, k: float, direction=(1 / math.sqrt(2), -1 / math.sqrt(2)), layout=SCATTERER_LAYOUT
) -> ProblemSpec:
    """Incident plane wave on a piecewise-constant scatterer in the unit square."""
    grid = build_grid(n, n, (0.0, 0.0, 1.0, 1.0))
    pw = PlaneWave(float(k), tuple(direction))
    return ProblemSpec(
        grid=grid,
        a=indicator_field(grid, 1.0, layout),
        v=constant_field(grid, 1.0),
        beta=1.0,
        k=float(k),
        tags=tag_boundary(grid, ()),
        f=None,
        g=pw.g,
        name="scattering",
    )


MARMOUSI_RECT = (0.0, -3.0, 9.0, 0.0)


def marmousi_problem(grid: Grid, slowness: CellField, freq_hz: float,
                     source=(6.0, 0.0), sharpness: float = 2000.0) -> ProblemSpec:
    """Dirichlet on top, impedance ``beta = k V`` elsewhere, Gaussian source."""
    k = 2 * math.pi * freq_hz
    tags = tag_boundary(grid, ("top",))
    be = grid.boundary_edges
    beta = k * slowness.values[be.cells]
    return ProblemSpec(
        grid=grid,
        a=constant_field(grid, 1.0),
        v=slowness,
        beta=beta,
        k=k,
        tags=tags,
        f=gaussian_source(source, sharpness),
        g=None,
        name="marmousi",
    )

