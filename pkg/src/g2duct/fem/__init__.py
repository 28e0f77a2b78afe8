"""Lagrange finite elements on triangles: bases, quadrature, assembly, norms."""
from .basis import reference_basis, reference_nodes
from .quadrature import triangle_rule, interval_rule
from .space import (FunctionSpace, Field, Geometry, geometry, locate,
                    VELOCITY, PRESSURE, TRANSPORT, SCALAR)
from .assembly import (assemble, mass_matrix, laplace_matrix, div_div_matrix,
                       ipm_matrices, convection_matrix, load_vector, load_function,
                       divergence_load, to_csr, to_vector)
from .linalg import Factorization, DirichletSystem, solve_sparse
from .norms import norm, integral, divergence_norm
from .export import write_field_csv, write_cell_dump
