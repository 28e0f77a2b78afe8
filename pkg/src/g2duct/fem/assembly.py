"""Global matrices and load vectors for the forms used by the solvers.

All forms are assembled from stacks of dense element matrices which are
scattered into CSR storage by :func:`g2duct.kernels.scatter_csr`.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .. import kernels
from . import basis
from .quadrature import triangle_rule
from .space import Field, FunctionSpace, geometry


@lru_cache(maxsize=None)
def _reference_gradients(degree, order):
    pts, w = triangle_rule(order)
    phi, dphi = basis.reference_basis(degree, pts)
    # S[m, n, a, b] = int d_m phi_a d_n phi_b over the reference cell
    s = np.einsum("q,qam,qbn->mnab", w, dphi, dphi)
    mass = np.einsum("q,qa,qb->ab", w, phi, phi)
    return s, mass


def _pattern(test: FunctionSpace, trial: FunctionSpace):
    key = ("pattern", id(trial))
    cache = test.__dict__.setdefault("_patterns", {})
    if key not in cache:
        cache[key] = kernels.csr_pattern(test.cell_dofs, trial.cell_dofs, test.dim, trial.dim)
    return cache[key]


def to_csr(test: FunctionSpace, local, trial: FunctionSpace | None = None):
    """Sum element matrices ``(cells, n_test, n_trial)`` into a CSR matrix."""
    trial = test if trial is None else trial
    indptr, indices, slot = _pattern(test, trial)
    data = kernels.scatter_csr(slot, np.ascontiguousarray(local, dtype=float), len(indices))
    a = sp.csr_matrix((data, indices.copy(), indptr.copy()), shape=(test.dim, trial.dim))
    a.eliminate_zeros()
    return a


def to_vector(space: FunctionSpace, local):
    """Sum element vectors ``(cells, n_local)`` into a global vector."""
    return np.bincount(space.cell_dofs.ravel(), weights=np.asarray(local).ravel(),
                       minlength=space.dim)


def _gradient_tensor(space):
    """Element tensor ``D[c, a, b, i, j] = int d_i phi_a d_j phi_b``."""
    g = geometry(space.mesh)
    s, _ = _reference_gradients(space.degree, max(2 * space.degree - 2, 1))
    return np.einsum("c,cmi,cnj,mnab->cabij", np.abs(g.detJ), g.invJ, g.invJ, s,
                     optimize=True)


def _sym(local):
    """Exactly symmetric element matrices, so the global pattern stays
    symmetric once numerical zeros are dropped."""
    return 0.5 * (local + np.swapaxes(local, 1, 2))


def _vectorize(local_scalar, ncomp):
    """Block-diagonal element matrix for an interleaved vector space."""
    c, n, _ = local_scalar.shape
    out = np.zeros((c, n, ncomp, n, ncomp))
    for i in range(ncomp):
        out[:, :, i, :, i] = local_scalar
    return out.reshape(c, n * ncomp, n * ncomp)


def laplace_matrix(space: FunctionSpace, coefficient=None):
    """``int c grad u : grad v`` (componentwise for vector spaces) with an
    optional per-cell constant ``c``."""
    d = _gradient_tensor(space)
    k = d[..., 0, 0] + d[..., 1, 1]
    if coefficient is not None:
        k = k * np.asarray(coefficient, float)[:, None, None]
    return to_csr(space, _sym(_vectorize(k, space.components)))


def div_div_matrix(space: FunctionSpace):
    """``int div u div v`` on a two-component space."""
    if space.components != 2:
        raise ValueError("div-div form needs a 2-component space")
    d = _gradient_tensor(space)
    c, n = d.shape[:2]
    local = np.transpose(d, (0, 1, 3, 2, 4)).reshape(c, 2 * n, 2 * n)
    return to_csr(space, _sym(local))


def ipm_matrices(space: FunctionSpace):
    """Vector Laplacian and div-div matrices from one element tensor."""
    d = _gradient_tensor(space)
    c, n = d.shape[:2]
    lap = to_csr(space, _sym(_vectorize(d[..., 0, 0] + d[..., 1, 1], 2)))
    dd = to_csr(space, _sym(np.transpose(d, (0, 1, 3, 2, 4)).reshape(c, 2 * n, 2 * n)))
    return lap, dd


def mass_matrix(space: FunctionSpace):
    g = geometry(space.mesh)
    _, m = _reference_gradients(space.degree, 2 * space.degree)
    local = np.abs(g.detJ)[:, None, None] * m[None]
    return to_csr(space, _sym(_vectorize(local, space.components)))


def convection_matrix(space: FunctionSpace, velocity: Field, order=None):
    """Scalar ``int (u . grad w) v`` with test and trial in ``space``."""
    if not space.same_mesh(velocity.space):
        raise ValueError("convection velocity lives on a different mesh")
    if space.components != 1:
        raise ValueError("convection is assembled on the scalar space")
    order = order or (space.degree * 2 + velocity.space.degree - 1)
    pts, w = triangle_rule(order)
    phi, dphi = basis.reference_basis(space.degree, pts)
    g = geometry(space.mesh)
    u = velocity.at_reference(pts, 0)
    # contravariant velocity in reference coordinates
    uref = np.einsum("cmd,cqd->cqm", g.invJ, u)
    local = np.einsum("c,q,qa,cqm,qbm->cab", np.abs(g.detJ), w, phi, uref, dphi,
                      optimize=True)
    return to_csr(space, local)


def load_vector(space: FunctionSpace, values_at_qp, order):
    """``int f . v`` given ``f`` at the quadrature points ``(cells, Q, comp)``."""
    pts, w = triangle_rule(order)
    phi = basis.reference_basis(space.degree, pts, 0)
    g = geometry(space.mesh)
    f = np.asarray(values_at_qp).reshape(space.mesh.n_cells, len(w), space.components)
    local = np.einsum("c,q,qa,cqk->cak", np.abs(g.detJ), w, phi, f, optimize=True)
    return to_vector(space, local.reshape(space.mesh.n_cells, -1))


def load_function(space: FunctionSpace, f, order=None):
    """``int f . v`` for a callable ``f(x, y) -> (..., comp)``."""
    order = order or 2 * space.degree
    pts, _ = triangle_rule(order)
    x = geometry(space.mesh).map(pts)
    vals = np.asarray(f(x[..., 0], x[..., 1]), dtype=float)
    vals = np.broadcast_to(vals, x.shape[:2] + ((space.components,) if space.components > 1 else ()))
    return load_vector(space, vals.reshape(x.shape[0], x.shape[1], -1), order)


def divergence_load(test: FunctionSpace, field: Field, order=None):
    """``int div(field) q`` for a scalar test space ``test``."""
    order = order or (test.degree + field.space.degree - 1)
    pts, _ = triangle_rule(order)
    _, grad = field.at_reference(pts, 1)
    div = grad[..., 0, 0] + grad[..., 1, 1]
    return load_vector(test, div[..., None], order)


FORMS = {
    "mass": mass_matrix,
    "laplace": laplace_matrix,
    "divdiv": div_div_matrix,
    "convection": convection_matrix,
}


def assemble(form: str, space: FunctionSpace, *coefficients, **kw):
    """Dispatch on a form name; see :data:`FORMS`."""
    try:
        fn = FORMS[form]
    except KeyError:
        raise ValueError(f"unknown form {form!r}; choose from {sorted(FORMS)}") from None
    for c in coefficients:
        if isinstance(c, Field) and not space.same_mesh(c.space):
            raise ValueError("coefficient field lives on a different mesh")
    return fn(space, *coefficients, **kw)
