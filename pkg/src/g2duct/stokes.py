"""Stokes solves by the iterated penalty method and a Picard Navier-Stokes
baseline.

The penalty iteration solves

    (grad u, grad v) + rho (div u, div v) = (f, v) - (div z, div v),
    z <- z + rho u,

on a velocity space with Dirichlet data, and the pressure is recovered as
the L2 projection of ``-div z`` onto the degree ``k-1`` scalar space.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields

import numpy as np

from .analytic import BoundaryData
from .errors import ConfigError, IncompatibleBoundaryData, NonConvergence
from .fem import (DirichletSystem, Factorization, Field, FunctionSpace, PRESSURE, SCALAR, VELOCITY,
                  divergence_load, divergence_norm, integral, ipm_matrices,
                  load_vector, mass_matrix, norm, triangle_rule)
from .mesh import Mesh

log = logging.getLogger(__name__)

CONVERGED = "converged"
EARLY_EXIT = "early-exit"


@dataclass
class SolverConfig:
    """Penalty, tolerances and iteration limits shared by all solvers.

    ``outer_norm`` selects the norm of ``u^n - u^{n-1}`` used for the outer
    stopping test; ``warm_start`` carries the penalty accumulator ``z``
    from one outer iterate to the next.
    """

    rho: float = 1e4
    tol_outer: float = 1e-5
    tol_div: float = 1e-10
    ipm_max: int = 50
    outer_max: int = 200
    early_exit_ratio: float = 0.5
    degree: int = 4
    early_exit: bool = True
    warm_start: bool = True
    outer_norm: str = "L2"
    blowup: float = 1e10
    upwind: bool = False
    flux_tol: float = 1e-10

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigError("rho must be positive", field="solver.rho")
        for name in ("tol_outer", "tol_div", "flux_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive", field=f"solver.{name}")
        if not 0 < self.early_exit_ratio < 1:
            raise ConfigError("early_exit_ratio must lie in (0, 1)", field="solver.early_exit_ratio")
        if self.ipm_max < 1 or self.outer_max < 1:
            raise ConfigError("iteration limits must be at least 1", field="solver.ipm_max")
        if self.degree not in (1, 2, 3, 4):
            raise ConfigError("degree must be 1..4", field="solver.degree")
        if self.outer_norm not in ("L2", "H1"):
            raise ConfigError("outer_norm is L2 or H1", field="solver.outer_norm")

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class StokesResult:
    u: Field
    z: Field
    pi: Field
    ipm_iterations: int
    div_norm: float
    status: str = CONVERGED
    div_history: list = field(default_factory=list)
    outer_iterations: int = 0
    residuals: list = field(default_factory=list)


# ----------------------------------------------------------------------------
# spaces and boundary values

def velocity_space(mesh: Mesh, degree=4) -> FunctionSpace:
    return _cached_space(mesh, degree, 2, VELOCITY)


def pressure_space(mesh: Mesh, degree=4) -> FunctionSpace:
    """Scalar space one degree below the velocity."""
    return _cached_space(mesh, degree - 1, 1, PRESSURE)


def scalar_space(mesh: Mesh, degree=4) -> FunctionSpace:
    return _cached_space(mesh, degree, 1, SCALAR)


def _cached_space(mesh, degree, comps, kind):
    # one space per (degree, components) so dof maps and factorizations are shared
    cache = mesh.__dict__.setdefault("_spaces", {})
    key = (degree, comps, kind)
    if key not in cache:
        cache[key] = FunctionSpace(mesh, degree, comps, kind=kind)
    return cache[key]


def boundary_values(space: FunctionSpace, traces: dict, tags=None):
    """Nodes on the given tags and the trace values there.

    Walls are written first so that inlet and outlet profiles own the
    shared corner nodes; for compatible data both agree there anyway.
    Tags absent from ``traces`` get zero.
    """
    mesh = space.mesh
    tags = list(dict.fromkeys(mesh.facet_tags.values())) if tags is None else list(tags)
    tags.sort(key=lambda t: t in traces)
    nodes, vals = [], []
    for tag in tags:
        tn = space.tagged_nodes(tag)
        if len(tn) == 0:
            continue
        x, y = space.node_coords[tn].T
        if tag in traces:
            v = np.asarray(traces[tag](x, y), float)
            v = np.broadcast_to(v, (len(tn),) + ((space.components,) if space.components > 1 else ()))
        else:
            v = np.zeros((len(tn),) + ((space.components,) if space.components > 1 else ()))
        nodes.append(tn)
        vals.append(v.reshape(len(tn), -1))
    if not nodes:
        return np.zeros(0, np.int64), np.zeros((0, space.components))
    nodes = np.concatenate(nodes)
    vals = np.concatenate(vals)
    # keep the last write for nodes shared between tags
    _, first = np.unique(nodes[::-1], return_index=True)
    keep = len(nodes) - 1 - first
    return nodes[keep], vals[keep]


def velocity_dirichlet(space: FunctionSpace, g):
    """Fixed dofs and values for the whole boundary."""
    if isinstance(g, BoundaryData):
        nodes, vals = boundary_values(space, g.velocity)
    elif callable(g):
        nodes = space.boundary_nodes()
        x, y = space.node_coords[nodes].T
        vals = np.asarray(g(x, y), float).reshape(len(nodes), space.components)
    elif g is None:
        nodes = space.boundary_nodes()
        vals = np.zeros((len(nodes), space.components))
    else:
        raise TypeError("g must be BoundaryData, a callable or None")
    order = np.argsort(nodes)
    return space.node_dofs(nodes[order]), vals[order].ravel()


def check_flux(mesh, g, tol):
    if not isinstance(g, BoundaryData):
        return
    net, total = g.net_flux(mesh)
    if abs(net) > tol * max(total, 1.0):
        raise IncompatibleBoundaryData(f"net boundary flux {net:.3e} (total |g.n| {total:.3e})")


# ----------------------------------------------------------------------------
# penalty operator

class PenaltyOperator:
    """Factored ``A + rho D`` on the free velocity dofs plus the mass
    matrices needed for the loads, built once per space and penalty."""

    def __init__(self, space: FunctionSpace, rho: float):
        self.space = space
        self.rho = rho
        lap, dd = ipm_matrices(space)
        self.dd = dd
        fixed = space.node_dofs(space.boundary_nodes())
        self.system = DirichletSystem((lap + rho * dd).tocsr(), fixed, symmetric=True)
        self.fixed = self.system.fixed
        self._mass = None

    @property
    def mass(self):
        if self._mass is None:
            self._mass = mass_matrix(self.space)
        return self._mass

    @classmethod
    def get(cls, space: FunctionSpace, rho: float) -> "PenaltyOperator":
        cache = space.__dict__.setdefault("_penalty", {})
        if rho not in cache:
            cache[rho] = cls(space, rho)
        return cache[rho]


def _mass_factor(space: FunctionSpace):
    f = space.__dict__.get("_mass_lu")
    if f is None:
        m = mass_matrix(space)
        f = (m, Factorization(m, symmetric=True))
        space.__dict__["_mass_lu"] = f
    return f


def l2_projection(space: FunctionSpace, rhs):
    """Coefficients ``c`` with ``M c = rhs``; returns ``(c, relative residual)``."""
    m, lu = _mass_factor(space)
    c = lu.solve(rhs)
    res = np.linalg.norm(m @ c - rhs) / max(np.linalg.norm(rhs), 1e-300)
    return c, float(res)


def recover_pressure(z: Field, pspace: FunctionSpace, zero_mean=True) -> Field:
    """L2 projection of ``-div z`` onto ``pspace``, shifted to zero mean."""
    rhs = -divergence_load(pspace, z)
    coef, _ = l2_projection(pspace, rhs)
    pi = Field(pspace, coef)
    if zero_mean:
        area = pspace.mesh.area()
        pi.coefficients -= integral(pi) / area
    return pi


def _sorted_dirichlet(op: PenaltyOperator, dofs, vals):
    if not np.array_equal(dofs, op.fixed):
        raise ValueError("boundary data must cover exactly the boundary dofs")
    return vals


def ipm_iterate(op: PenaltyOperator, load, gvals, config: SolverConfig, z0=None):
    """Run the penalty iteration; returns ``(u, z, div history, status)``."""
    space = op.space
    z = np.zeros(space.dim) if z0 is None else np.array(z0, dtype=float)
    hist = []
    status = None
    u = None
    for it in range(1, config.ipm_max + 1):
        u = op.system.solve(load - op.dd @ z, gvals)
        z += op.rho * u
        d = divergence_norm(Field(space, u))
        hist.append(d)
        if d <= config.tol_div:
            status = CONVERGED
            break
        if (config.early_exit and it >= 2 and hist[-2] > 0
                and d / hist[-2] > config.early_exit_ratio):
            status = EARLY_EXIT
            break
    if status is None:
        raise NonConvergence(f"IPM reached {config.ipm_max} iterations with "
                             f"|div u| = {hist[-1]:.3e}", hist,
                             {"u": u, "z": z})
    return u, z, hist, status


def solve_stokes_ipm(mesh: Mesh, space: FunctionSpace | None = None, w=None, g=None,
                     config: SolverConfig | None = None, z0=None, load=None,
                     check_compat=True) -> StokesResult:
    """Solve ``-lap u + grad pi = w`` with ``u = g`` on the boundary.

    ``w`` is a vector :class:`Field` on the velocity space (or ``None``);
    an explicit load vector may be passed instead. ``z0`` warm-starts the
    accumulator.
    """
    config = config or SolverConfig()
    space = space or velocity_space(mesh, config.degree)
    if check_compat:
        check_flux(mesh, g, config.flux_tol)
    op = PenaltyOperator.get(space, config.rho)
    dofs, gvals = velocity_dirichlet(space, g)
    gvals = _sorted_dirichlet(op, dofs, gvals)
    rhs = np.zeros(space.dim) if load is None else np.asarray(load, float).copy()
    if w is not None:
        rhs += op.mass @ (w.coefficients if isinstance(w, Field) else np.asarray(w))
    u, z, hist, status = ipm_iterate(op, rhs, gvals, config,
                                     None if z0 is None else _coef(z0))
    zf = Field(space, z)
    pi = recover_pressure(zf, pressure_space(mesh, space.degree))
    return StokesResult(Field(space, u), zf, pi, len(hist), hist[-1], status, hist)


def _coef(x):
    return x.coefficients if isinstance(x, Field) else np.asarray(x)


# ----------------------------------------------------------------------------
# Navier-Stokes by Picard iteration

def advection_load(u: Field, scale=1.0, order=None):
    """``-scale * int (u . grad u) . v`` on the velocity space of ``u``."""
    order = order or 3 * u.space.degree - 1
    pts, _ = triangle_rule(order)
    val, grad = u.at_reference(pts, 1)
    conv = np.einsum("cqij,cqj->cqi", grad, val)
    return -scale * load_vector(u.space, conv, order)


def outer_difference(a: Field, b: Field, kind="L2"):
    return norm(a - b, kind)


def solve_navier_stokes(mesh: Mesh, space: FunctionSpace | None = None, R: float = 1.0,
                        g=None, config: SolverConfig | None = None, aa_config=None) -> StokesResult:
    """``-lap u + R u.grad u + grad p = 0`` by Picard iteration.

    Each step is a penalty Stokes solve with the advection of the previous
    iterate as an explicit load. The plain iteration contracts only for
    moderate ``R``; ``aa_config`` enables Anderson acceleration of the
    ``(u, z)`` sequence. The returned ``pi`` is the pressure ``p`` of this
    scaling.
    """
    from .anderson import AAState, aa_step

    if R < 0:
        raise ConfigError("Reynolds number must be nonnegative", field="R")
    config = config or SolverConfig()
    space = space or velocity_space(mesh, config.degree)
    res = solve_stokes_ipm(mesh, space, None, g, config)
    if R == 0:
        return res
    u, z = res.u, res.z
    aa = AAState.start(u.coefficients, z.coefficients) if aa_config else None
    history = []
    ipm_total = res.ipm_iterations
    for n in range(1, config.outer_max + 1):
        step = solve_stokes_ipm(mesh, space, None, g, config,
                                z0=z if config.warm_start else None,
                                load=advection_load(u, R), check_compat=False)
        ipm_total += step.ipm_iterations
        if aa is not None:
            uc, zc, _ = aa_step(aa, step.u.coefficients, step.z.coefficients, aa_config)
            step.u, step.z = Field(space, uc), Field(space, zc)
            step.pi = recover_pressure(step.z, pressure_space(mesh, space.degree))
        r = outer_difference(step.u, u, config.outer_norm)
        history.append(r)
        u, z = step.u, step.z
        log.debug("picard %d: |du| = %.3e, ipm %d", n, r, step.ipm_iterations)
        if not np.isfinite(r) or norm(u, "Linf-dof") > config.blowup:
            raise NonConvergence(f"Picard iterate blew up at step {n}", history, step)
        if r < config.tol_outer:
            step.outer_iterations = n
            step.residuals = history
            step.ipm_iterations = ipm_total
            return step
    raise NonConvergence(f"Picard iteration did not reach {config.tol_outer:g} in "
                         f"{config.outer_max} steps (last {history[-1]:.3e})", history, step)
