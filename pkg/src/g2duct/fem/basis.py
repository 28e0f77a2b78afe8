"""Nodal Lagrange bases on the reference triangle ``{x, y >= 0, x + y <= 1}``.

Local node order: the three vertices, then the ``k - 1`` interior nodes of
each edge (edge ``j`` is opposite vertex ``j`` and runs from its lower to its
higher local vertex), then interior nodes in lexicographic order.
"""
from functools import lru_cache

import numpy as np

MAX_DEGREE = 4
_EDGES = ((1, 2), (0, 2), (0, 1))
_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def n_local(degree):
    return (degree + 1) * (degree + 2) // 2


def _check(degree):
    if not (1 <= int(degree) <= MAX_DEGREE) or int(degree) != degree:
        raise ValueError(f"Lagrange degree must be in 1..{MAX_DEGREE}, got {degree}")


@lru_cache(maxsize=None)
def reference_nodes(degree):
    _check(degree)
    k = degree
    nodes = [*_VERTS]
    for a, b in _EDGES:
        for j in range(1, k):
            t = j / k
            nodes.append((1 - t) * _VERTS[a] + t * _VERTS[b])
    for j in range(1, k):
        for i in range(1, k - j):
            nodes.append(np.array([i / k, j / k]))
    return np.array(nodes)


def _exponents(degree):
    return [(a, d - a) for d in range(degree + 1) for a in range(d, -1, -1)]


@lru_cache(maxsize=None)
def _coefficients(degree):
    nodes = reference_nodes(degree)
    ex = _exponents(degree)
    vander = np.array([[x**a * y**b for a, b in ex] for x, y in nodes])
    return np.linalg.inv(vander)


def _monomials(degree, pts, dx, dy):
    x, y = pts[:, 0], pts[:, 1]
    cols = []
    for a, b in _exponents(degree):
        if a < dx or b < dy:
            cols.append(np.zeros(len(pts)))
            continue
        ca = np.prod(np.arange(a, a - dx, -1)) if dx else 1.0
        cb = np.prod(np.arange(b, b - dy, -1)) if dy else 1.0
        cols.append(ca * cb * x ** (a - dx) * y ** (b - dy))
    return np.array(cols).T


def reference_basis(degree, points, derivatives=1):
    """Values, gradients and (optionally) Hessians of the nodal basis.

    Returns ``phi (P, n)``, ``dphi (P, n, 2)`` and, if ``derivatives >= 2``,
    ``ddphi (P, n, 2, 2)``.
    """
    _check(degree)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    c = _coefficients(degree)
    phi = _monomials(degree, pts, 0, 0) @ c
    if derivatives == 0:
        return phi
    dphi = np.stack([_monomials(degree, pts, 1, 0) @ c,
                     _monomials(degree, pts, 0, 1) @ c], axis=-1)
    if derivatives == 1:
        return phi, dphi
    hxx = _monomials(degree, pts, 2, 0) @ c
    hxy = _monomials(degree, pts, 1, 1) @ c
    hyy = _monomials(degree, pts, 0, 2) @ c
    ddphi = np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)
    return phi, dphi, ddphi


def edge_parameters(degree):
    """Local indices of the nodes on each edge, ordered from the edge's first
    to its second vertex (vertices included)."""
    k = degree
    out = []
    for j, (a, b) in enumerate(_EDGES):
        inner = [3 + j * (k - 1) + i for i in range(k - 1)]
        out.append([a, *inner, b])
    return out
