"""Multiscale spectral GFEM for the 2D heterogeneous Helmholtz equation.

Q1 finite elements on uniform square grids, overlapping box decompositions
with oversampling, optimal local spaces from a constrained generalized
eigenproblem, and a coarse Galerkin solve.
"""

__version__ = "0.1.0"

from .assemble import AssembledForms, assemble_forms
from .coeffs import ProblemSpec, marmousi_problem, plane_wave_problem, scattering_problem
from .decomp import build_pou, decompose
from .gfem import Solution, msgfem_pipeline, solve_coarse, solve_fine
from .grid import Grid, build_grid, tag_boundary
from .metrics import energy_norm, relative_errors

__all__ = [
    "AssembledForms", "Grid", "ProblemSpec", "Solution", "assemble_forms", "build_grid",
    "build_pou", "decompose", "energy_norm", "marmousi_problem", "msgfem_pipeline",
    "plane_wave_problem", "relative_errors", "scattering_problem", "solve_coarse",
    "solve_fine", "tag_boundary",
]
