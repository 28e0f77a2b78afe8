"""Vectorised kernels: CSR assembly scatter and the pointwise div N."""
import numpy as np


def csr_pattern(test_dofs, trial_dofs, nrow, ncol):
    """Sparsity pattern of ``sum_c P_c^T A_c Q_c`` and the CSR slot of every
    element-matrix entry.

    Returns ``indptr``, ``indices`` and ``slot`` with
    ``slot.shape == (cells, n_test, n_trial)``.
    """
    nc, nt = test_dofs.shape
    ns = trial_dofs.shape[1]
    rows = np.broadcast_to(test_dofs[:, :, None], (nc, nt, ns)).ravel()
    cols = np.broadcast_to(trial_dofs[:, None, :], (nc, nt, ns)).ravel()
    key = rows.astype(np.int64) * ncol + cols
    uniq, inv = np.unique(key, return_inverse=True)
    indices = (uniq % ncol).astype(np.int32)
    counts = np.bincount(uniq // ncol, minlength=nrow)
    indptr = np.zeros(nrow + 1, np.int32)
    np.cumsum(counts, out=indptr[1:])
    return indptr, indices, inv.reshape(nc, nt, ns).astype(np.int64)


def scatter_csr(slot, local, nnz):
    """Accumulate element matrices into CSR data in a fixed order."""
    return np.bincount(slot.ravel(), weights=local.ravel(), minlength=nnz)


def divergence_n(u, du, ddu, dpi, alpha1, alpha2):
    """Pointwise ``div N(u, pi)`` for arrays of values, gradients and Hessians.

    ``u (..., d)``, ``du[..., i, j] = d_j u_i``, ``ddu[..., i, j, k] =
    d_j d_k u_i`` and ``dpi (..., d)``.  The tensor divergence is taken over
    the second index.
    """
    du_t = np.swapaxes(du, -1, -2)
    a = du + du_t
    # dA[..., i, j, k] = d_k A_ij
    da = ddu + np.swapaxes(ddu, -3, -2)
    div_a = np.einsum("...ijj->...i", da)  # laplacian + grad div
    # div(grad u^t A)_i = sum_jm d_i d_j u_m A_mj + d_i u_m d_j A_mj
    t1 = np.einsum("...mij,...mj->...i", ddu, a) + np.einsum("...mi,...m->...i", du, div_a)
    # div(A A)_i = sum_jm d_j A_im A_mj + A_im d_j A_mj
    t2 = np.einsum("...imj,...mj->...i", da, a) + np.einsum("...im,...m->...i", a, div_a)
    # div(u (x) u)_i = (grad u) u + u div u
    divu = np.einsum("...jj->...", du)
    t3 = np.einsum("...ij,...j->...i", du, u) + u * divu[..., None]
    # grad u^t grad pi
    t4 = np.einsum("...ji,...j->...i", du, dpi)
    return -alpha1 * t4 + alpha1 * t1 + (alpha1 + alpha2) * t2 - t3
