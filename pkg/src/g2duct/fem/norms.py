"""Discrete Lebesgue and Sobolev norms evaluated by quadrature."""
import numpy as np

from .quadrature import triangle_rule
from .space import Field, geometry

KINDS = ("L2", "H1", "H1semi", "Linf-dof")


def _integrate_sq(field: Field, order, grad):
    pts, w = triangle_rule(order)
    val, g = field.at_reference(pts, 1)
    det = np.abs(geometry(field.space.mesh).detJ)
    l2 = np.einsum("c,q,cqk->", det, w, val**2)
    semi = np.einsum("c,q,cqkd->", det, w, g**2) if grad else 0.0
    return l2, semi


def norm(field: Field, kind="L2", order=None):
    """``L2``, ``H1`` (including the L2 part), ``H1semi`` or ``Linf-dof``."""
    if kind == "Linf-dof":
        return float(np.max(np.abs(field.coefficients))) if field.coefficients.size else 0.0
    if kind not in KINDS:
        raise ValueError(f"unknown norm {kind!r}")
    order = order or 2 * field.space.degree
    l2, semi = _integrate_sq(field, order, kind != "L2")
    if kind == "L2":
        return float(np.sqrt(l2))
    if kind == "H1semi":
        return float(np.sqrt(semi))
    return float(np.sqrt(l2 + semi))


def integral(field: Field, order=None):
    """Integral of each component over the domain."""
    order = order or 2 * field.space.degree
    pts, w = triangle_rule(order)
    val = field.at_reference(pts, 0)
    det = np.abs(geometry(field.space.mesh).detJ)
    out = np.einsum("c,q,cqk->k", det, w, val)
    return out[0] if len(out) == 1 else out


def divergence_norm(field: Field, order=None):
    order = order or 2 * field.space.degree - 2
    pts, w = triangle_rule(max(order, 1))
    _, g = field.at_reference(pts, 1)
    div = g[..., 0, 0] + g[..., 1, 1]
    det = np.abs(geometry(field.space.mesh).detJ)
    return float(np.sqrt(np.einsum("c,q,cq->", det, w, div**2)))
