"""Sparse direct solves and Dirichlet reduction."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import SingularMatrix


class Factorization:
    """LU factorization of a square sparse matrix, reusable across solves."""

    def __init__(self, a, symmetric=False):
        a = sp.csc_matrix(a)
        if a.shape[0] != a.shape[1]:
            raise ValueError(f"matrix must be square, got {a.shape}")
        self.shape = a.shape
        self.norm = spla.norm(a, 1) if a.nnz else 0.0
        opts = dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0) if symmetric else {}
        try:
            self._lu = spla.splu(a, **opts)
        except RuntimeError as exc:
            raise SingularMatrix(f"factorization failed ({exc}); "
                                 f"n={a.shape[0]}, nnz={a.nnz}, |A|_1={self.norm:.3e}") from exc
        pivots = np.abs(self._lu.U.diagonal())
        self.min_pivot = float(pivots.min()) if len(pivots) else 0.0
        self.max_pivot = float(pivots.max()) if len(pivots) else 0.0
        if not np.isfinite(self.min_pivot) or self.min_pivot <= 1e-14 * max(self.max_pivot, 1e-300):
            raise SingularMatrix(f"ill-conditioned factorization: pivots in "
                                 f"[{self.min_pivot:.3e}, {self.max_pivot:.3e}]")

    def solve(self, b):
        return self._lu.solve(np.asarray(b, dtype=float))


def solve_sparse(a, b, symmetric=False, check=True):
    """Solve ``A x = b`` with a sparse LU factorization.

    The relative residual ``|Ax - b| <= 1e-10 (|A||x| + |b|)`` is checked
    unless ``check`` is false.
    """
    a = sp.csr_matrix(a)
    f = Factorization(a, symmetric=symmetric)
    x = f.solve(b)
    if check:
        r = np.linalg.norm(a @ x - b, np.inf)
        scale = spla.norm(a, np.inf) * np.linalg.norm(x, np.inf) + np.linalg.norm(b, np.inf)
        if r > 1e-10 * scale:
            raise SingularMatrix(f"residual {r:.3e} exceeds 1e-10 * {scale:.3e}; "
                                 f"pivots in [{f.min_pivot:.3e}, {f.max_pivot:.3e}]")
    return x


class DirichletSystem:
    """``A`` restricted to free dofs, with eliminated rows and columns.

    Boundary values enter through :meth:`solve` as ``rhs -= A_fd g``.
    """

    def __init__(self, a, fixed, symmetric=False):
        a = sp.csr_matrix(a)
        n = a.shape[0]
        self.fixed = np.unique(np.asarray(fixed, dtype=np.int64))
        mask = np.ones(n, bool)
        mask[self.fixed] = False
        self.free = np.flatnonzero(mask)
        self.a_ff = a[self.free][:, self.free]
        self.a_fd = a[self.free][:, self.fixed]
        self.n = n
        self.lu = Factorization(self.a_ff, symmetric=symmetric)

    def solve(self, rhs, values):
        """Solve with ``x[fixed] = values``; ``rhs`` is the full load vector."""
        rhs = np.asarray(rhs, dtype=float)
        values = np.asarray(values, dtype=float)
        x = np.empty(self.n)
        x[self.fixed] = values
        b = rhs[self.free]
        if len(self.fixed):
            b = b - self.a_fd @ values
        x[self.free] = self.lu.solve(b)
        return x
