"""Grade-two flow by the transformed Stokes/transport iteration.

Each outer step solves

    -lap u + grad pi = w                     (penalty Stokes, u = g on the boundary)
    (nu I + alpha1 u.grad) w = div N(u, pi)  (transport, w = w_b on the inflow set)

and the physical pressure is ``p = nu pi + alpha1 u.grad pi``. For
``alpha1 + alpha2 = 0`` a scalar vorticity-like variable gives an
independent formulation used for cross-checks.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .analytic import BoundaryData, duct_boundary_data, outward_normal
from .anderson import AAConfig, AAState, aa_step
from .errors import (IncompatibleBoundaryData, NonConvergence, ParameterMismatch,
                     SingularMatrix, SingularTransport)
from .fem import (DirichletSystem, Field, FunctionSpace, basis, convection_matrix,
                  geometry, interval_rule, laplace_matrix, load_vector, mass_matrix,
                  norm, triangle_rule)
from .mesh import DuctGeometry, Mesh
from .params import FluidParams
from .stokes import (SolverConfig, boundary_values, check_flux, l2_projection,
                     pressure_space, recover_pressure, scalar_space, solve_stokes_ipm,
                     velocity_space)

log = logging.getLogger(__name__)

__all__ = ["FluidParams", "FlowState", "SimplifiedState", "assemble_N_divergence",
           "solve_transport", "solve_grade2", "solve_grade2_simplified",
           "recover_physical_pressure", "inflow_facets", "write_manifest"]


@dataclass
class FlowState:
    u: Field
    pi: Field
    w: Field
    z: Field
    p: Field | None = None
    outer_iterations: int = 0
    converged: bool = False
    residuals: list = field(default_factory=list)
    ipm_iterations: list = field(default_factory=list)
    w_norms: list = field(default_factory=list)
    aa_log: list = field(default_factory=list)
    inflow_tags: tuple = ()
    params: FluidParams | None = None


@dataclass
class SimplifiedState:
    u: Field
    q: Field
    z_scalar: Field
    outer_iterations: int = 0
    converged: bool = False
    residuals: list = field(default_factory=list)
    params: FluidParams | None = None

    def pressure(self) -> Field:
        """``p = q + |u|^2 / 2`` projected onto the space of ``q``."""
        ps = self.q.space
        order = 2 * self.u.space.degree + ps.degree
        pts, _ = triangle_rule(order)
        val = self.u.at_reference(pts, 0)
        rhs = load_vector(ps, 0.5 * np.einsum("cqk,cqk->cq", val, val)[..., None], order)
        c, _ = l2_projection(ps, rhs)
        return Field(ps, self.q.coefficients + c)


# ----------------------------------------------------------------------------
# loads

def assemble_N_divergence(u: Field, pi: Field, params: FluidParams, order=None):
    """``int div N(u, pi) . v`` over the velocity-degree vector space.

    The divergence is evaluated cellwise from exact element Hessians, which
    is the same as integrating by parts on each cell and keeping the
    element-boundary terms.
    """
    if not u.space.same_mesh(pi.space):
        raise ValueError("u and pi live on different meshes")
    order = order or 2 * u.space.degree + 2
    pts, _ = triangle_rule(order)
    val, grad, hess = u.at_reference(pts, 2)
    _, dpi = pi.at_reference(pts, 1)
    dn = kernels.divergence_n(val, grad, hess, dpi[..., 0, :], params.alpha1, params.alpha2)
    return load_vector(u.space, dn, order)


def rotational_load(u: Field, z: Field, scale=1.0, order=None):
    """``scale * int z (u2, -u1) . v``."""
    order = order or 2 * u.space.degree + z.space.degree
    pts, _ = triangle_rule(order)
    val = u.at_reference(pts, 0)
    zv = z.at_reference(pts, 0)[..., 0]
    f = np.stack([zv * val[..., 1], -zv * val[..., 0]], axis=-1)
    return scale * load_vector(u.space, f, order)


def curl_load(u: Field, test: FunctionSpace, scale=1.0, order=None):
    """``scale * int (du2/dx - du1/dy) q`` on a scalar space."""
    order = order or u.space.degree + test.degree - 1
    pts, _ = triangle_rule(order)
    _, g = u.at_reference(pts, 1)
    c = g[..., 1, 0] - g[..., 0, 1]
    return scale * load_vector(test, c[..., None], order)


# ----------------------------------------------------------------------------
# inflow set and transport

def inflow_facets(mesh: Mesh, data: BoundaryData, alpha1: float, order=4):
    """Boundary edges where ``alpha1 g.n < 0`` on average over the facet."""
    if alpha1 == 0:
        return []
    t, wq = interval_rule(order)
    out = []
    for (a, b), tag in mesh.facet_tags.items():
        if tag not in data.velocity:
            continue
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        pts = pa + t[:, None] * (pb - pa)
        gn = data.g(tag, pts[:, 0], pts[:, 1]) @ outward_normal(mesh, (a, b))
        if alpha1 * (wq @ gn) < 0:
            out.append(((a, b), tag))
    return out


def _inflow_values(space: FunctionSpace, facets, traces: dict, comps):
    """Nodes on the inflow facets and the prescribed values there."""
    by_tag = {}
    for e, tag in facets:
        by_tag.setdefault(tag, []).append(e)
    nodes, vals = [], []
    for tag, edges in by_tag.items():
        if tag not in traces:
            raise IncompatibleBoundaryData(f"inflow facets tagged {tag!r} have no transport data")
        tn = np.unique(space.facet_nodes(edges).ravel())
        x, y = space.node_coords[tn].T
        v = np.asarray(traces[tag](x, y), float).reshape(len(tn), comps)
        nodes.append(tn)
        vals.append(v)
    if not nodes:
        return np.zeros(0, np.int64), np.zeros((0, comps))
    nodes, vals = np.concatenate(nodes), np.concatenate(vals)
    nodes, idx = np.unique(nodes, return_index=True)
    return nodes, vals[idx]


def _upwind_coefficient(u: Field, alpha1):
    """First-order artificial diffusion ``|alpha1| h |u| / 2`` per cell."""
    mesh = u.space.mesh
    pts, _ = triangle_rule(1)
    val = u.at_reference(pts, 0)[:, 0]
    return 0.5 * abs(alpha1) * mesh.diameters() * np.linalg.norm(val, axis=1)


def transport_operator(u: Field, params: FluidParams, sspace: FunctionSpace, upwind=False):
    """``nu M + alpha1 C(u)`` on the scalar space (plus optional diffusion)."""
    a = params.nu * _scalar_mass(sspace)
    if params.alpha1 != 0:
        a = a + params.alpha1 * convection_matrix(sspace, u)
        if upwind:
            a = a + laplace_matrix(sspace, _upwind_coefficient(u, params.alpha1))
    return a.tocsr()


def _scalar_mass(space):
    m = space.__dict__.get("_mass")
    if m is None:
        m = mass_matrix(space)
        space.__dict__["_mass"] = m
    return m


def _solve_scalar_transport(a, rhs_nodes, nodes, vals, alpha1, unorm):
    """Solve ``a x = rhs`` columnwise with ``x[nodes] = vals``."""
    try:
        sys = DirichletSystem(a, nodes)
    except SingularMatrix as exc:
        raise SingularTransport(f"{exc}; alpha1*|u| = {abs(alpha1) * unorm:.3e}") from exc
    cols = [sys.solve(rhs_nodes[:, c], vals[:, c] if len(nodes) else vals[:, c])
            for c in range(rhs_nodes.shape[1])]
    x = np.column_stack(cols)
    if not np.all(np.isfinite(x)):
        raise SingularTransport(f"transport solve produced non-finite values; "
                                f"alpha1*|u| = {abs(alpha1) * unorm:.3e}")
    return x


def solve_transport(u: Field, load, params: FluidParams, inflow: BoundaryData | None = None,
                    facets=None, upwind=False) -> Field:
    """``(nu I + alpha1 u.grad) w = div N`` with ``w = w_b`` on the inflow set.

    ``load`` is the assembled vector load on the velocity space. The
    operator acts componentwise, so each component is a scalar solve with
    the same matrix.
    """
    vspace = u.space
    sspace = scalar_space(vspace.mesh, vspace.degree)
    if facets is None:
        facets = inflow_facets(vspace.mesh, inflow, params.alpha1) if inflow else []
    nodes, vals = _inflow_values(sspace, facets, inflow.transport if inflow else {}, 2)
    a = transport_operator(u, params, sspace, upwind)
    rhs = np.asarray(load, float).reshape(sspace.n_nodes, 2)
    x = _solve_scalar_transport(a, rhs, nodes, vals, params.alpha1, norm(u, "Linf-dof"))
    return Field(vspace, x.ravel())


# ----------------------------------------------------------------------------
# pressure

def recover_physical_pressure(state: FlowState, params: FluidParams) -> Field:
    """``p = nu pi + alpha1 u . G`` with ``G`` the L2 projection of
    ``grad pi`` onto the pressure space, taken nodally at the pressure
    nodes. Where ``u = 0`` this is exactly ``nu pi``."""
    pi = state.pi
    ps = pi.space
    p = params.nu * pi.coefficients
    if params.alpha1 == 0:
        return Field(ps, p)
    order = 2 * ps.degree
    pts, _ = triangle_rule(order)
    _, dpi = pi.at_reference(pts, 1)
    gx, _ = l2_projection(ps, load_vector(ps, dpi[..., 0, 0:1], order))
    gy, _ = l2_projection(ps, load_vector(ps, dpi[..., 0, 1:2], order))
    uval = _values_at_nodes(state.u, ps)
    return Field(ps, p + params.alpha1 * (uval[:, 0] * gx + uval[:, 1] * gy))


def _values_at_nodes(f: Field, target: FunctionSpace):
    """Values of a continuous field at the nodes of another space on the
    same mesh (evaluated in any cell containing the node)."""
    ref = basis.reference_nodes(target.degree)
    vals = f.at_reference(ref, 0)  # (cells, P, comp)
    out = np.empty((target.n_nodes, f.space.components))
    out[target.cell_nodes.ravel()] = vals.reshape(-1, f.space.components)
    return out


# ----------------------------------------------------------------------------
# outer iteration

def _initial_transport(vspace: FunctionSpace, data: BoundaryData, facets):
    """``w_b`` of the inflow facets' tag extended over the whole domain."""
    tags = [t for _, t in facets]
    if not tags:
        return vspace.zero()
    fn = data.transport.get(tags[0])
    if fn is None:
        raise IncompatibleBoundaryData(f"no transport data on {tags[0]!r}")
    return vspace.interpolate(fn)


def _blowup(msg, history, state):
    raise NonConvergence(msg, history, state)


def solve_grade2(mesh: Mesh, params: FluidParams, geom: DuctGeometry | None = None,
                 config: SolverConfig | None = None, aa_config: AAConfig | None = None,
                 boundary: BoundaryData | None = None, w0: Field | None = None,
                 raise_on_failure=True) -> FlowState:
    """Fixed-point iteration of the transformed grade-two system.

    Starts from ``w0`` (default ``w_b`` of the inflow tag extended over the
    domain). With ``aa_config`` the velocity and accumulator sequences are
    Anderson-accelerated; convergence is tested on the extrapolated
    velocity. Without ``raise_on_failure`` a non-converged state is
    returned instead of raising.
    """
    config = config or SolverConfig()
    data = boundary if boundary is not None else duct_boundary_data(geom or DuctGeometry(), params)
    vspace = velocity_space(mesh, config.degree)
    pspace = pressure_space(mesh, config.degree)
    check_flux(mesh, data, config.flux_tol)
    facets = inflow_facets(mesh, data, params.alpha1)
    w = w0.copy() if w0 is not None else _initial_transport(vspace, data, facets)
    u = vspace.zero()
    z = vspace.zero()
    aa_state = AAState.start(u.coefficients, z.coefficients) if aa_config else None
    state = FlowState(u, pspace.zero(), w, z, params=params,
                      inflow_tags=tuple(sorted({t for _, t in facets})))
    for n in range(1, config.outer_max + 1):
        st = solve_stokes_ipm(mesh, vspace, w, data, config,
                              z0=z if (config.warm_start and n > 1) else None,
                              check_compat=False)
        if aa_state is not None:
            uc, zc, _ = aa_step(aa_state, st.u.coefficients, st.z.coefficients, aa_config)
            u_new, z = Field(vspace, uc), Field(vspace, zc)
            pi = recover_pressure(z, pspace)
        else:
            u_new, z, pi = st.u, st.z, st.pi
        load = assemble_N_divergence(u_new, pi, params)
        w = solve_transport(u_new, load, params, data, facets, config.upwind)
        r = norm(u_new - u, config.outer_norm)
        wn = norm(w, "L2")
        u = u_new
        state.residuals.append(r)
        state.ipm_iterations.append(st.ipm_iterations)
        state.w_norms.append(wn)
        state.u, state.pi, state.w, state.z, state.outer_iterations = u, pi, w, z, n
        log.info("outer %d: |du| = %.3e, |w| = %.3e, ipm %d", n, r, wn, st.ipm_iterations)
        if not np.isfinite(r) or not np.isfinite(wn) or wn > config.blowup:
            state.aa_log = aa_state.log if aa_state else []
            if raise_on_failure:
                _blowup(f"|w| = {wn:.3e} exceeds {config.blowup:g} at outer step {n}",
                        state.residuals, state)
            return state
        if n > 1 and r < config.tol_outer:
            state.converged = True
            break
    state.aa_log = aa_state.log if aa_state else []
    if not state.converged and raise_on_failure:
        raise NonConvergence(f"outer iteration did not reach {config.tol_outer:g} in "
                             f"{config.outer_max} steps (last {state.residuals[-1]:.3e})",
                             state.residuals, state)
    state.p = recover_physical_pressure(state, params)
    return state


def solve_grade2_simplified(mesh: Mesh, params: FluidParams, geom: DuctGeometry | None = None,
                            config: SolverConfig | None = None,
                            aa_config: AAConfig | None = None,
                            boundary: BoundaryData | None = None) -> SimplifiedState:
    """Solver for ``alpha1 + alpha2 = 0`` in rotational form.

        -nu lap u + z (-u2, u1) + grad q = 0,   div u = 0,
        nu z + alpha1 u.grad z = nu curl u,

    with ``curl u = du2/dx - du1/dy``. The momentum step uses the previous
    ``z`` and ``u`` as an explicit load.
    """
    scale = max(abs(params.alpha1), abs(params.alpha2), 1.0)
    if abs(params.alpha1 + params.alpha2) > 1e-14 * scale:
        raise ParameterMismatch(f"simplified model needs alpha1 + alpha2 = 0, got "
                                f"{params.alpha1 + params.alpha2:.3e}")
    config = config or SolverConfig()
    data = boundary if boundary is not None else duct_boundary_data(geom or DuctGeometry(), params)
    vspace = velocity_space(mesh, config.degree)
    sspace = scalar_space(mesh, config.degree)
    check_flux(mesh, data, config.flux_tol)
    facets = inflow_facets(mesh, data, params.alpha1)
    nodes, vals = _inflow_values(sspace, facets, data.vorticity, 1)
    tags = [t for _, t in facets]
    zs = sspace.interpolate(data.vorticity[tags[0]]) if tags else sspace.zero()
    nu = params.nu
    u = vspace.zero()
    zacc = vspace.zero()
    aa_state = AAState.start(u.coefficients, zacc.coefficients) if aa_config else None
    res = []
    st = None
    converged = False
    n = 0
    for n in range(1, config.outer_max + 1):
        load = rotational_load(u, zs, 1.0 / nu) if n > 1 else None
        st = solve_stokes_ipm(mesh, vspace, None, data, config, load=load,
                              z0=zacc if (config.warm_start and n > 1) else None,
                              check_compat=False)
        if aa_state is not None:
            uc, zc, _ = aa_step(aa_state, st.u.coefficients, st.z.coefficients, aa_config)
            u_new, zacc = Field(vspace, uc), Field(vspace, zc)
        else:
            u_new, zacc = st.u, st.z
        a = transport_operator(u_new, params, sspace, config.upwind)
        rhs = curl_load(u_new, sspace, nu)[:, None]
        x = _solve_scalar_transport(a, rhs, nodes, vals, params.alpha1, norm(u_new, "Linf-dof"))
        zs = Field(sspace, x[:, 0])
        r = norm(u_new - u, config.outer_norm)
        u = u_new
        res.append(r)
        log.info("simplified outer %d: |du| = %.3e", n, r)
        if not np.isfinite(r) or norm(zs, "L2") > config.blowup:
            raise NonConvergence(f"simplified iteration blew up at step {n}", res, None)
        if n > 1 and r < config.tol_outer:
            converged = True
            break
    if not converged:
        raise NonConvergence(f"simplified iteration did not reach {config.tol_outer:g}",
                             res, None)
    pi = recover_pressure(zacc, pressure_space(mesh, config.degree))
    q = Field(pi.space, nu * pi.coefficients)
    return SimplifiedState(u, q, zs, n, converged, res, params)


# ----------------------------------------------------------------------------

def write_manifest(state: FlowState, path, config: SolverConfig | None = None,
                   aa_config: AAConfig | None = None, extra: dict | None = None):
    """Text manifest of one run: parameters, tolerances and histories."""
    p = state.params
    doc = {
        "params": {"nu": p.nu, "alpha1": p.alpha1, "alpha2": p.alpha2, "U": p.U,
                   "alpha": p.magnitude, "theta": p.argument} if p else {},
        "solver": config.as_dict() if config else {},
        "aa": vars(aa_config) if aa_config else {"m_max": 0},
        "convergence_test": "extrapolated iterate" if aa_config else "plain iterate",
        "outer_iterations": state.outer_iterations,
        "converged": state.converged,
        "residuals": state.residuals,
        "ipm_iterations": state.ipm_iterations,
        "w_norms": state.w_norms,
        "inflow_tags": list(state.inflow_tags),
        "mesh": {"cells": state.u.space.mesh.n_cells,
                 "provenance": list(state.u.space.mesh.provenance),
                 "split": state.u.space.mesh.split_kind,
                 "velocity_dofs": state.u.space.dim},
        "aa_log": state.aa_log,
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, default=float)
        f.write("\n")
    return doc
