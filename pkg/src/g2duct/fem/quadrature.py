"""Quadrature rules on the reference triangle and the unit interval."""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def triangle_rule(order):
    """Collapsed Gauss-Jacobi rule exact for total degree ``order``.

    Weights sum to the reference area 1/2.
    """
    order = int(order)
    if order < 1 or order > 40:
        raise ValueError(f"unsupported quadrature order {order}")
    if order == 1:
        return np.array([[1 / 3, 1 / 3]]), np.array([0.5])
    n = (order + 2) // 2
    s, ws = np.polynomial.legendre.leggauss(n)
    s, ws = (s + 1) / 2, ws / 2
    t, wt = roots_jacobi(n, 1.0, 0.0)
    t, wt = (t + 1) / 2, wt / 4
    # Duffy map (s, t) -> (s (1 - t), t); Jacobian (1 - t) is in the t-weight
    x = np.outer(1 - t, s).ravel()
    y = np.repeat(t, n)
    w = np.outer(wt, ws).ravel()
    return np.column_stack([x, y]), w


@lru_cache(maxsize=None)
def interval_rule(order):
    """Gauss-Legendre on ``[0, 1]`` exact for degree ``order``."""
    n = max(1, (order + 2) // 2)
    s, w = np.polynomial.legendre.leggauss(n)
    return (s + 1) / 2, w / 2
