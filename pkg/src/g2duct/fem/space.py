"""Continuous Lagrange spaces, coefficient fields and point evaluation."""
from __future__ import annotations

from functools import cached_property

import numpy as np

from ..mesh import Mesh
from . import basis
from .quadrature import triangle_rule

VELOCITY = "vector-velocity"
PRESSURE = "scalar-pressure"
TRANSPORT = "vector-transport"
SCALAR = "scalar"


class Geometry:
    """Affine cell maps ``x = x0 + J xi`` for every cell of a mesh."""

    def __init__(self, mesh: Mesh):
        p = mesh.vertices[mesh.cells]
        self.x0 = p[:, 0]
        self.J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        self.detJ = self.J[:, 0, 0] * self.J[:, 1, 1] - self.J[:, 0, 1] * self.J[:, 1, 0]
        inv = np.empty_like(self.J)
        inv[:, 0, 0] = self.J[:, 1, 1]
        inv[:, 1, 1] = self.J[:, 0, 0]
        inv[:, 0, 1] = -self.J[:, 0, 1]
        inv[:, 1, 0] = -self.J[:, 1, 0]
        self.invJ = inv / self.detJ[:, None, None]

    def map(self, ref_pts):
        """Physical coordinates of reference points, shape ``(cells, P, 2)``."""
        return self.x0[:, None, :] + np.einsum("cij,pj->cpi", self.J, ref_pts)


def geometry(mesh: Mesh) -> Geometry:
    g = getattr(mesh, "_geometry", None)
    if g is None:
        g = Geometry(mesh)
        mesh._geometry = g
    return g


class FunctionSpace:
    """Degree-``k`` continuous Lagrange space with ``components`` copies.

    Scalar nodes are numbered vertices first, then edge-interior nodes by
    edge, then cell-interior nodes by cell; a vector dof is
    ``components * node + component``.
    """

    def __init__(self, mesh: Mesh, degree: int, components: int = 1, kind: str | None = None):
        basis._check(degree)
        self.mesh = mesh
        self.degree = int(degree)
        self.components = int(components)
        self.kind = kind or (SCALAR if components == 1 else VELOCITY)
        self._build_nodes()

    def _build_nodes(self):
        mesh, k = self.mesh, self.degree
        nv, ne, nc = mesh.n_vertices, len(mesh.edges), mesh.n_cells
        n_int = (k - 1) * (k - 2) // 2
        cells = mesh.cells
        nodes = [cells]
        for j, (a, b) in enumerate(basis._EDGES):
            ge = mesh.cell_edges[:, j]
            forward = cells[:, a] < cells[:, b]
            steps = np.arange(k - 1)
            off = np.where(forward[:, None], steps[None, :], (k - 2 - steps)[None, :])
            nodes.append(nv + ge[:, None] * (k - 1) + off)
        if n_int:
            nodes.append(nv + ne * (k - 1) + np.arange(nc)[:, None] * n_int + np.arange(n_int))
        self.cell_nodes = np.ascontiguousarray(np.hstack(nodes), dtype=np.int64)
        self.n_nodes = nv + ne * (k - 1) + nc * n_int
        ref = basis.reference_nodes(k)
        coords = np.empty((self.n_nodes, 2))
        coords[self.cell_nodes.ravel()] = geometry(mesh).map(ref).reshape(-1, 2)
        self.node_coords = coords

    @property
    def dim(self) -> int:
        return self.n_nodes * self.components

    @property
    def n_local(self) -> int:
        return basis.n_local(self.degree) * self.components

    @cached_property
    def cell_dofs(self) -> np.ndarray:
        if self.components == 1:
            return self.cell_nodes
        c = self.components
        return (self.cell_nodes[:, :, None] * c + np.arange(c)).reshape(len(self.cell_nodes), -1)

    def node_dofs(self, nodes):
        nodes = np.asarray(nodes, dtype=np.int64)
        if self.components == 1:
            return nodes
        c = self.components
        return (nodes[:, None] * c + np.arange(c)).ravel()

    def facet_nodes(self, edges):
        """Scalar nodes lying on the given edges (endpoints included), in the
        order ``(edge, position along edge from lower vertex)``."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(edges) == 0:
            return np.zeros((0, self.degree + 1), np.int64)
        k = self.degree
        lookup = {tuple(e): i for i, e in enumerate(self.mesh.edges.tolist())}
        ids = np.array([lookup[tuple(e)] for e in edges.tolist()], dtype=np.int64)
        inner = self.mesh.n_vertices + ids[:, None] * (k - 1) + np.arange(k - 1)
        return np.hstack([edges[:, :1], inner, edges[:, 1:]])

    def tagged_nodes(self, *tags):
        edges = [e for e, t in self.mesh.facet_tags.items() if t in tags]
        return np.unique(self.facet_nodes(edges).ravel())

    def boundary_nodes(self):
        return np.unique(self.facet_nodes(list(self.mesh.facet_tags)).ravel())

    def interpolate(self, f) -> "Field":
        """Nodal interpolant of ``f(x, y) -> array (..., components)``."""
        x, y = self.node_coords[:, 0], self.node_coords[:, 1]
        vals = np.asarray(f(x, y), dtype=float)
        if self.components == 1:
            vals = np.broadcast_to(vals, x.shape)
        else:
            vals = np.broadcast_to(vals, x.shape + (self.components,))
        return Field(self, np.ascontiguousarray(vals).ravel().copy())

    def zero(self) -> "Field":
        return Field(self, np.zeros(self.dim))

    def tabulate(self, order, derivatives=1):
        """Reference basis at the quadrature points of the given order."""
        pts, w = triangle_rule(order)
        return pts, w, basis.reference_basis(self.degree, pts, derivatives)

    def same_mesh(self, other: "FunctionSpace"):
        return self.mesh is other.mesh


class Field:
    """Coefficient vector over a :class:`FunctionSpace`."""

    def __init__(self, space: FunctionSpace, coefficients):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (space.dim,):
            raise ValueError(f"coefficient length {coefficients.shape} does not match "
                             f"space dimension {space.dim}")
        self.space = space
        self.coefficients = coefficients

    def copy(self):
        return Field(self.space, self.coefficients.copy())

    def __add__(self, other):
        return Field(self.space, self.coefficients + _coef(other))

    def __sub__(self, other):
        return Field(self.space, self.coefficients - _coef(other))

    def __mul__(self, s):
        return Field(self.space, self.coefficients * s)

    __rmul__ = __mul__

    def nodal(self):
        """Coefficients reshaped to ``(nodes, components)``."""
        return self.coefficients.reshape(self.space.n_nodes, self.space.components)

    def local(self):
        """Per-cell coefficients ``(cells, nloc, components)``."""
        return self.nodal()[self.space.cell_nodes]

    def at_reference(self, ref_pts, derivatives=1):
        """Values ``(cells, P, comp)``, gradients ``(cells, P, comp, 2)`` and
        optionally Hessians ``(cells, P, comp, 2, 2)`` at reference points of
        every cell."""
        tab = basis.reference_basis(self.space.degree, ref_pts, max(derivatives, 1))
        loc = self.local()
        g = geometry(self.space.mesh)
        nc, nloc, ncomp = loc.shape
        npt = len(tab[0])
        flat = loc.transpose(1, 0, 2).reshape(nloc, -1)  # (a, c*k)
        val = (tab[0] @ flat).reshape(npt, nc, ncomp).transpose(1, 0, 2)
        if derivatives == 0:
            return val
        d = tab[1].transpose(0, 2, 1).reshape(-1, nloc) @ flat  # (p*m, c*k)
        dref = d.reshape(npt, 2, nc, ncomp).transpose(2, 0, 3, 1)
        grad = np.matmul(dref, g.invJ[:, None, :, :])
        if derivatives == 1:
            return val, grad
        h = tab[2].transpose(0, 2, 3, 1).reshape(-1, nloc) @ flat
        href = h.reshape(npt, 2, 2, nc, ncomp).transpose(3, 0, 4, 1, 2)
        jt = g.invJ[:, None, None, :, :]
        hess = np.swapaxes(jt, -1, -2) @ href @ jt
        return val, grad, hess

    def evaluate(self, points):
        """Point values at arbitrary physical points (located by a search)."""
        points = np.atleast_2d(np.asarray(points, float))
        cells, ref = locate(self.space.mesh, points)
        tab = basis.reference_basis(self.space.degree, ref, 0)
        loc = self.local()[cells]
        return np.einsum("pa,pak->pk", tab, loc)


def _coef(x):
    return x.coefficients if isinstance(x, Field) else x


def locate(mesh: Mesh, points, tol=1e-10):
    """Cell index and reference coordinates for each point."""
    g = geometry(mesh)
    cells = np.full(len(points), -1)
    ref = np.zeros((len(points), 2))
    for i, p in enumerate(points):
        xi = np.einsum("cij,cj->ci", g.invJ, p - g.x0)
        inside = (xi[:, 0] >= -tol) & (xi[:, 1] >= -tol) & (xi.sum(1) <= 1 + tol)
        hit = np.flatnonzero(inside)
        if len(hit) == 0:
            raise ValueError(f"point {p} is outside the mesh")
        cells[i] = hit[0]
        ref[i] = xi[hit[0]]
    return cells, ref
