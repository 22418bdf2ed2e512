"""Spherical-harmonic moment solvers with DG, hybrid DG/FV and FV discretizations."""

from .discretization import State, assemble_steady, energy_norm, evaluate_rho, project
from .mesh import Grid, Scheme, build_grid, dof_layout
from .moments import BasisSpec, FluxSet, Geometry, Material, flux_set
from .timeloop import TimeConfig, TransportProblem, run_transient

__version__ = "0.1.0"

__all__ = [
    "BasisSpec", "FluxSet", "Geometry", "Grid", "Material", "Scheme", "State",
    "TimeConfig", "TransportProblem", "assemble_steady", "build_grid", "dof_layout",
    "energy_norm", "evaluate_rho", "flux_set", "project", "run_transient",
]
