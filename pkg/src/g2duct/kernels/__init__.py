"""Low-level kernels shared by assembly and the analytic oracles."""
from .core import csr_pattern, divergence_n, scatter_csr

__all__ = ["csr_pattern", "scatter_csr", "divergence_n"]
