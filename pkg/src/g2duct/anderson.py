"""Filtered Anderson acceleration for paired coefficient sequences.

The velocity sequence ``U`` determines the least-squares coefficients
``gamma``; the companion sequence ``Z`` (the penalty accumulator) is
recombined with the same coefficients so the two stay consistent.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)

SIGMA_MIN = 0.1
SIGMA_MAX = 2.0 ** -0.5


@dataclass
class AAConfig:
    m_max: int = 5
    sigma_min: float = SIGMA_MIN
    sigma_max: float = SIGMA_MAX
    beta: float = 1.0

    def __post_init__(self):
        if self.m_max < 0:
            raise ConfigError("m_max must be nonnegative", field="aa.m_max")
        if not 0 <= self.sigma_min < self.sigma_max < 1:
            raise ConfigError("need 0 <= sigma_min < sigma_max < 1", field="aa.sigma_min")
        if not 0 < self.beta <= 1:
            raise ConfigError("beta must lie in (0, 1]", field="aa.beta")


@dataclass
class AAState:
    """Histories with the newest column first, plus the last two iterates."""

    eu: list = field(default_factory=list)
    fu: list = field(default_factory=list)
    ez: list = field(default_factory=list)
    fz: list = field(default_factory=list)
    m: int = 0
    u: np.ndarray | None = None
    z: np.ndarray | None = None
    u_prev: np.ndarray | None = None
    z_prev: np.ndarray | None = None
    du: np.ndarray | None = None
    dz: np.ndarray | None = None
    n: int = 0
    log: list = field(default_factory=list)

    @classmethod
    def start(cls, u0, z0=None) -> "AAState":
        u0 = np.asarray(u0, float)
        z0 = np.zeros(0) if z0 is None else np.asarray(z0, float)
        return cls(u=u0.copy(), z=z0.copy())


def threshold(du_norm, config: AAConfig):
    """Dynamic filter threshold ``max(min(sigma_max, sqrt|dU|), sigma_min)``."""
    return max(min(config.sigma_max, float(np.sqrt(du_norm))), config.sigma_min)


def direction_sines(F):
    """Sine of the angle between each column and the span of those to its
    left, from a thin QR factorization; the first is 1 by convention."""
    F = np.asarray(F, float)
    if F.ndim != 2 or F.shape[1] == 0:
        raise ValueError("F must have at least one column")
    norms = np.linalg.norm(F, axis=0)
    r = np.abs(np.diag(np.linalg.qr(F, mode="r")))
    s = np.divide(r, norms, out=np.zeros_like(r), where=norms > 0)
    s = np.minimum(s, 1.0)
    if norms[0] > 0:
        s[0] = 1.0
    return s


def filter(EU, FU, delta_U, EZ, FZ, m, sigma):
    """Angle filter and least-squares solve.

    Columns are visited left to right; column ``i >= 2`` is dropped from
    all four histories when its direction sine against the columns already
    kept falls below ``sigma``. The QR factorization of the surviving
    columns then gives ``gamma`` from ``R gamma = Q^t delta_U``.

    Histories are lists of 1-D arrays. Returns the pruned lists, the new
    depth and ``gamma``.
    """
    m = min(m, len(FU))
    EU, FU, EZ, FZ = EU[:m], FU[:m], EZ[:m], FZ[:m]
    if m == 0:
        return EU, FU, EZ, FZ, 0, np.zeros(0)
    keep = []
    q = []
    for i, f in enumerate(FU):
        nf = np.linalg.norm(f)
        if nf == 0.0:
            continue
        r = f.copy()
        for _ in range(2):  # classical Gram-Schmidt, reorthogonalised once
            for qj in q:
                r -= (qj @ r) * qj
        nr = np.linalg.norm(r)
        if keep and nr / nf < sigma:
            continue
        keep.append(i)
        q.append(r / nr)
    pick = lambda cols: [cols[i] for i in keep] if cols else cols
    EU, FU, EZ, FZ = pick(EU), pick(FU), pick(EZ), pick(FZ)
    m = len(keep)
    if m == 0:
        return EU, FU, EZ, FZ, 0, np.zeros(0)
    Q, R = np.linalg.qr(np.column_stack(FU))
    gamma = np.linalg.solve(R, Q.T @ np.asarray(delta_U, float))
    return EU, FU, EZ, FZ, m, gamma


def aa_step(state: AAState, u_hat, z_hat=None, config: AAConfig | None = None):
    """One accelerated update from the fixed-point outputs ``u_hat, z_hat``.

    Returns ``(u_next, z_next, state)``; ``state`` is updated in place.
    With ``m_max = 0`` and ``beta = 1`` the result is exactly ``u_hat``.
    """
    config = config or AAConfig()
    u_hat = np.asarray(u_hat, float)
    z_hat = np.zeros(0) if z_hat is None else np.asarray(z_hat, float)
    if u_hat.shape != state.u.shape or z_hat.shape != state.z.shape:
        raise ValueError(f"dimension mismatch: got {u_hat.shape}/{z_hat.shape}, "
                         f"expected {state.u.shape}/{state.z.shape}")
    beta = config.beta
    du = u_hat - state.u
    dz = z_hat - state.z
    du_norm = float(np.linalg.norm(du))
    m_before = 0
    sigma = threshold(du_norm, config)
    gamma = np.zeros(0)
    if state.n > 0 and config.m_max > 0:
        state.fu.insert(0, du - state.du)
        state.eu.insert(0, state.u - state.u_prev)
        state.fz.insert(0, dz - state.dz)
        state.ez.insert(0, state.z - state.z_prev)
        state.m = min(state.m + 1, config.m_max)
        for h in (state.fu, state.eu, state.fz, state.ez):
            del h[state.m:]
        m_before = state.m
        (state.eu, state.fu, state.ez, state.fz,
         state.m, gamma) = filter(state.eu, state.fu, du, state.ez, state.fz, state.m, sigma)
    if beta == 1.0:
        u_next, z_next = u_hat.copy(), z_hat.copy()
    else:
        u_next = state.u + beta * du
        z_next = state.z + beta * dz
    if state.m:
        u_next -= (np.column_stack(state.eu) + beta * np.column_stack(state.fu)) @ gamma
        if z_next.size:
            z_next -= (np.column_stack(state.ez) + beta * np.column_stack(state.fz)) @ gamma
    line = (f"aa n={state.n} |dU|={du_norm:.3e} m={m_before}->{state.m} "
            f"sigma={sigma:.3f} |gamma|={np.linalg.norm(gamma):.3e}")
    state.log.append(line)
    log.debug(line)
    state.u_prev, state.z_prev = state.u, state.z
    state.du, state.dz = du, dz
    state.u, state.z = u_next, z_next
    state.n += 1
    return u_next, (z_next if z_next.size else None), state
