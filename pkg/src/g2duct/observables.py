"""Rheometer force, pressure drop, field differences and Aitken extrapolation."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import fem
from .analytic import outward_normal
from .errors import DegenerateDifferences, G2DuctError
from .fem import Field, basis, geometry, interval_rule
from .mesh import INLET, OUTLET, WALL_CONTRACTION, Mesh

CSV_COLUMNS = ("U", "nu", "alpha1", "alpha2", "alpha", "theta", "F", "F_over_U",
               "iters", "converged", "r_u", "r_b", "r_p")


@dataclass
class ForceRecord:
    U: float
    nu: float
    alpha1: float
    alpha2: float
    alpha: float
    theta: float
    F: float
    F_over_U: float
    iters: int
    converged: bool
    r_u: int = 0
    r_b: int = 0
    r_p: int = 0

    @classmethod
    def from_solve(cls, F, params, iters, converged, mesh: Mesh):
        r_u, r_b, r_p = mesh.provenance
        return cls(params.U, params.nu, params.alpha1, params.alpha2, params.magnitude,
                   params.argument, F, F / params.U if params.U else math.nan,
                   int(iters), bool(converged), r_u, r_b, r_p)


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_records(records, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for r in records:
            d = asdict(r)
            w.writerow([_fmt(d[c]) for c in CSV_COLUMNS])


def read_records(path):
    out = []
    with open(path, newline="") as f:
        rd = csv.DictReader(f)
        if tuple(rd.fieldnames or ()) != CSV_COLUMNS:
            raise G2DuctError(f"{path}: unexpected columns {rd.fieldnames}")
        for row in rd:
            kw = {}
            for c in CSV_COLUMNS:
                v = row[c]
                if c in ("iters", "r_u", "r_b", "r_p"):
                    kw[c] = int(v)
                elif c == "converged":
                    kw[c] = v.strip().lower() in ("1", "true")
                else:
                    kw[c] = float(v)
            out.append(ForceRecord(**kw))
    return out


# ----------------------------------------------------------------------------
# boundary traces

def _edge_trace(field: Field, edges, order, derivatives=1):
    """Owner-cell traces of a field on boundary edges.

    Returns physical points ``(E, Q, 2)``, weights scaled by edge length
    ``(E, Q)``, outward normals ``(E, 2)`` and the values (and gradients).
    """
    mesh = field.space.mesh
    owners = mesh.boundary_cells()
    t, wq = interval_rule(order)
    edges = [tuple(int(v) for v in e) for e in edges]
    cells = np.array([owners[e] for e in edges], dtype=np.int64)
    pa = mesh.vertices[[e[0] for e in edges]]
    pb = mesh.vertices[[e[1] for e in edges]]
    pts = pa[:, None, :] + t[None, :, None] * (pb - pa)[:, None, :]
    lengths = np.linalg.norm(pb - pa, axis=1)
    normals = np.array([outward_normal(mesh, e) for e in edges]).reshape(-1, 2)
    g = geometry(mesh)
    ref = np.einsum("eij,eqj->eqi", g.invJ[cells], pts - g.x0[cells][:, None, :])
    sp = field.space
    loc = field.local()[cells]  # (E, nloc, comp)
    nq = len(t)
    tab = basis.reference_basis(sp.degree, ref.reshape(-1, 2), derivatives)
    phi = tab[0].reshape(len(edges), nq, -1) if derivatives else tab.reshape(len(edges), nq, -1)
    val = np.einsum("eqa,eak->eqk", phi, loc)
    weights = lengths[:, None] * wq[None, :]
    if not derivatives:
        return pts, weights, normals, val
    dphi = tab[1].reshape(len(edges), nq, -1, 2)
    grad = np.einsum("eqam,eak,emd->eqkd", dphi, loc, g.invJ[cells])
    return pts, weights, normals, val, grad


def force_integral(u: Field, pi: Field, nu: float, tag=WALL_CONTRACTION, pressure="auxiliary",
                   order=None):
    """Axial force on the facets carrying ``tag``.

    ``F = nu int n^t (grad u + grad u^t) e1 ds - int p n.e1 ds``. With
    ``pressure="auxiliary"`` the field is the auxiliary pressure and
    ``p = nu * pi`` on the walls; with ``"physical"`` it is ``p`` itself.
    """
    mesh = u.space.mesh
    edges = mesh.edges_with_tag(tag)
    if len(edges) == 0:
        raise G2DuctError(f"no facets tagged {tag!r}; the force integral needs them")
    order = order or 2 * u.space.degree
    _, w, n, _, grad = _edge_trace(u, edges, order)
    a = grad + np.swapaxes(grad, -1, -2)
    # n^t A e1 = sum_i n_i A_i0
    visc = np.einsum("eq,ei,eqi->", w, n, a[..., 0])
    _, wp, n_p, pv = _edge_trace(pi, edges, order, derivatives=0)
    pres = np.einsum("eq,e,eq->", wp, n_p[:, 0], pv[..., 0])
    scale = nu if pressure == "auxiliary" else 1.0
    if pressure not in ("auxiliary", "physical"):
        raise ValueError("pressure is 'auxiliary' or 'physical'")
    return float(nu * visc - scale * pres)


def force_integral_nested(u: Field, pi: Field, nu: float, tag=WALL_CONTRACTION, order=None):
    """Variant with ``nu`` applied again to the viscous term:
    ``nu * (nu * visc - pres)``. Kept for comparison only; it does not
    scale linearly with ``nu`` in the Stokes limit."""
    visc_only = force_integral(u, pi * 0.0, 1.0, tag, order=order)
    pres_only = -force_integral(u * 0.0, pi, 1.0, tag, order=order)
    return float(nu * (nu * visc_only - pres_only))


def state_force(state, nu, **kw):
    return force_integral(state.u, state.pi, nu, **kw)


# ----------------------------------------------------------------------------

def aitken_extrapolate(a0, a1, a2):
    """Aitken ``a2 - (a2 - a1)^2 / ((a2 - a1) - (a1 - a0))``."""
    d1, d2 = a1 - a0, a2 - a1
    den = d2 - d1
    scale = max(abs(a0), abs(a1), abs(a2), 1e-300)
    if abs(den) < 1e-15 * scale:
        raise DegenerateDifferences(f"second difference {den:.3e} vanishes")
    return a2 - d2 * d2 / den


def aitken_sensitivity(a0, a1, a2):
    """Gradient of :func:`aitken_extrapolate` with respect to ``(a0, a1, a2)``.

    Summing its absolute values times the input rounding bounds how far
    the extrapolated value can move when the inputs are rounded.
    """
    d1, d2 = a1 - a0, a2 - a1
    den = d2 - d1
    if den == 0:
        raise DegenerateDifferences("second difference vanishes")
    return np.array([d2 * d2, -2 * d1 * d2, d1 * d1]) / den**2


def _facet_mean(field: Field, tag, order=None):
    mesh = field.space.mesh
    edges = mesh.edges_with_tag(tag)
    if len(edges) == 0:
        raise G2DuctError(f"no facets tagged {tag!r}")
    _, w, _, v = _edge_trace(field, edges, order or 2 * field.space.degree, derivatives=0)
    return float(np.einsum("eq,eq->", w, v[..., 0]) / w.sum())


def pressure_drop(p: Field, inlet=INLET, outlet=OUTLET):
    """Length-weighted mean of ``p`` on the inlet minus that on the outlet."""
    return _facet_mean(p, inlet) - _facet_mean(p, outlet)


def field_difference(a: Field, b: Field, kind="H1", reference: Field | None = None):
    """``|a - b| / |reference|`` (absolute when ``reference`` is None)."""
    if a.space is not b.space and not (a.space.same_mesh(b.space)
                                       and a.space.degree == b.space.degree
                                       and a.space.components == b.space.components):
        raise ValueError("fields live on different spaces")
    d = fem.norm(Field(a.space, a.coefficients - b.coefficients), kind)
    if reference is None:
        return d
    return d / fem.norm(reference, kind)
