import math

import numpy as np
import pytest
import sympy as sy

from msgfem.assemble import Region, apply_source_quadrature
from msgfem.coeffs import (
    CellField,
    CoefficientError,
    PlaneWave,
    ProblemSpec,
    constant_field,
    gaussian_source,
    indicator_field,
    layered_velocity,
    marmousi_problem,
    plane_wave_problem,
    read_velocity_file,
    read_velocity_grid,
    write_velocity_file,
)
from msgfem.grid import build_grid, tag_boundary


@pytest.fixture
def grid():
    return build_grid(8, 8, (0.0, 0.0, 1.0, 1.0))


def test_cell_field_validation(grid):
    with pytest.raises(CoefficientError):
        CellField(grid, np.ones(5))
    with pytest.raises(CoefficientError):
        CellField(grid, np.r_[np.ones(63), 0.0])
    with pytest.raises(CoefficientError):
        CellField(grid, np.r_[np.ones(63), np.nan])
    f = CellField(grid, np.arange(1, 65, dtype=float))
    assert (f.min, f.max) == (1.0, 64.0)
    assert f.as_image()[0, 1] == 2.0 and f.as_image()[1, 0] == 9.0
    with pytest.raises(ValueError):
        f.values[0] = 5.0


def test_indicator_last_inclusion_wins(grid):
    f = indicator_field(grid, 1.0, [((0, 0, 0.5, 0.5), 3.0), ((0.25, 0.25, 1, 1), 7.0)])
    img = f.as_image()
    assert img[0, 0] == 3.0 and img[3, 3] == 7.0 and img[7, 0] == 1.0
    with pytest.raises(CoefficientError):
        indicator_field(grid, 1.0, [((0, 0, 1, 1), -1.0)])


def test_velocity_roundtrip_bit_exact(tmp_path):
    v = layered_velocity(30, 10, (0.0, -3.0, 9.0, 0.0), seed=3)
    p = tmp_path / "v.txt"
    write_velocity_file(p, v)
    w = read_velocity_file(p)
    assert w.shape == (10, 30)
    assert np.array_equal(v, w)
    assert v.min() >= 1.5 and v.max() <= 5.5


def test_velocity_errors(tmp_path, grid):
    with pytest.raises(FileNotFoundError):
        read_velocity_file(tmp_path / "missing.txt")
    bad = tmp_path / "bad.txt"
    bad.write_text("2 2\n1.0 2.0 3.0\n")
    with pytest.raises(CoefficientError, match="expected 4"):
        read_velocity_file(bad)
    bad.write_text("x 2\n")
    with pytest.raises(CoefficientError, match="header"):
        read_velocity_file(bad)
    bad.write_text("1 2\n1.0 -2.0\n")
    with pytest.raises(CoefficientError, match="positive"):
        read_velocity_file(bad)
    fine = tmp_path / "fine.txt"
    write_velocity_file(fine, np.ones((16, 16)))
    with pytest.raises(CoefficientError, match="finer"):
        read_velocity_grid(fine, grid)


def test_velocity_resampling(tmp_path, grid):
    v = np.array([[1.0, 2.0], [4.0, 5.0]])
    p = tmp_path / "v.txt"
    write_velocity_file(p, v)
    s = read_velocity_grid(p, grid).as_image()
    assert s[0, 0] == 1.0 and s[0, 7] == 0.5 and s[7, 0] == 0.25 and s[7, 7] == 0.2


def test_plane_wave_is_a_solution():
    x, y, k, dx, dy, nx, ny = sy.symbols("x y k d_x d_y n_x n_y", real=True)
    u = sy.exp(sy.I * k * (dx * x + dy * y))
    lap = sy.diff(u, x, 2) + sy.diff(u, y, 2)
    assert sy.simplify((-lap - k**2 * u).subs(dy, sy.sqrt(1 - dx**2))) == 0
    g_sym = nx * sy.diff(u, x) + ny * sy.diff(u, y) - sy.I * k * u
    pw = PlaneWave(3.0, (0.6, 0.8))
    pts = np.array([[0.1, 0.7, 1.0, 0.0], [0.3, 0.2, 0.0, -1.0]])
    for px, py, qx, qy in pts:
        ref = complex(g_sym.subs({x: px, y: py, k: 3.0, dx: 0.6, dy: 0.8, nx: qx, ny: qy}))
        assert pw.g(px, py, qx, qy) == pytest.approx(ref, abs=1e-13)
        gx, gy = pw.grad(px, py)
        assert gx == pytest.approx(complex(sy.diff(u, x).subs(
            {x: px, y: py, k: 3.0, dx: 0.6, dy: 0.8})), abs=1e-13)
    with pytest.raises(CoefficientError):
        PlaneWave(1.0, (1.0, 1.0))


@pytest.mark.parametrize("center, expected", [((0.5, 0.5), math.pi / 2000),
                                              ((0.5, 1.0), math.pi / 4000)])
def test_gaussian_source_mass(center, expected):
    # interior center integrates to pi/2000; on the boundary half the bump is cut off
    g = build_grid(256, 256, (0.0, 0.0, 1.0, 1.0))
    F = apply_source_quadrature(gaussian_source(center, 2000.0), Region.whole(g))
    assert F.sum().real == pytest.approx(expected, rel=1e-4)
    with pytest.raises(CoefficientError):
        gaussian_source(center, 0.0)


def test_problem_spec_validation(grid):
    a = constant_field(grid, 1.0)
    tags = tag_boundary(grid)
    with pytest.raises(CoefficientError):
        ProblemSpec(grid, a, a, 1.0, -1.0, tags)
    with pytest.raises(CoefficientError):
        ProblemSpec(grid, a, a, 0.0, 1.0, tags)
    spec = ProblemSpec(grid, a, a, 1.0, 0.0, tags)
    with pytest.raises(CoefficientError):
        spec.check_well_posed()
    all_dir = tag_boundary(grid, ("bottom", "right", "top", "left"))
    spec = ProblemSpec(grid, a, a, 0.0, 2.0, all_dir)
    with pytest.raises(CoefficientError, match="Robin"):
        spec.check_well_posed()
    assert spec.replace(k=3.0).k == 3.0


def test_presets():
    spec, pw = plane_wave_problem(16, 5.0)
    assert spec.k == 5.0 and spec.tags.robin_measure() == pytest.approx(4.0)
    g = build_grid(30, 10, (0.0, -3.0, 9.0, 0.0))
    vel = layered_velocity(30, 10, (0.0, -3.0, 9.0, 0.0))
    slow = CellField(g, 1.0 / vel.ravel())
    m = marmousi_problem(g, slow, 5.0)
    assert m.k == pytest.approx(10 * math.pi)
    assert m.tags.dirichlet_sides == frozenset({"top"})
    be = g.boundary_edges
    np.testing.assert_allclose(m.beta, m.k * slow.values[be.cells])
