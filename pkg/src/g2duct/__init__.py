"""Finite element simulation of grade-two fluid flow through a contraction duct.

The grade-two system is solved in transformed form: a penalty Stokes solve
for the velocity coupled to a first-order transport equation, iterated to a
fixed point (optionally Anderson-accelerated). The axial force on the
contraction walls is the rheometer observable.
"""
from .anderson import AAConfig, AAState, aa_step, direction_sines
from .errors import (ConfigError, DegenerateDifferences, G2DuctError, GeometryError,
                     IncompatibleBoundaryData, InsufficientSpan, MeshFormatError,
                     NonConvergence, ParallelLines, ParameterMismatch, RankDeficient,
                     SingularMatrix, SingularTransport)
from .grade2 import FlowState, SimplifiedState, solve_grade2, solve_grade2_simplified
from .mesh import DuctGeometry, Mesh, duct_mesh, read_mesh, write_mesh
from .observables import ForceRecord, aitken_extrapolate, force_integral, pressure_drop
from .params import FluidParams
from .stokes import SolverConfig, solve_navier_stokes, solve_stokes_ipm

__version__ = "0.1.0"

__all__ = [
    "AAConfig", "AAState", "aa_step", "direction_sines",
    "ConfigError", "DegenerateDifferences", "G2DuctError", "GeometryError",
    "IncompatibleBoundaryData", "InsufficientSpan", "MeshFormatError", "NonConvergence",
    "ParallelLines", "ParameterMismatch", "RankDeficient", "SingularMatrix",
    "SingularTransport",
    "FlowState", "SimplifiedState", "solve_grade2", "solve_grade2_simplified",
    "DuctGeometry", "Mesh", "duct_mesh", "read_mesh", "write_mesh",
    "ForceRecord", "aitken_extrapolate", "force_integral", "pressure_drop",
    "FluidParams", "SolverConfig", "solve_navier_stokes", "solve_stokes_ipm",
]
