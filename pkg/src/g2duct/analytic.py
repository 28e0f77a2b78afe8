"""Closed-form boundary data and exact solutions used as oracles.

Channel and pipe Poiseuille solutions of the grade-two system come with
all first and second derivatives so that ``div N`` can be evaluated by the
same pointwise kernel the solver uses.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernels import divergence_n
from .mesh import INLET, OUTLET, WALL_BUFFER, WALL_CONTRACTION, DuctGeometry, Mesh
from .params import FluidParams

DUCT, CHANNEL, PIPE, CUSTOM = "duct", "channel", "pipe", "custom"


def _zero2(x, y):
    x = np.asarray(x, float)
    return np.zeros(np.broadcast(x, y).shape + (2,))


def _stack2(a, b):
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    return np.stack([a, b], axis=-1)


@dataclass
class BoundaryData:
    """Per-tag boundary traces.

    ``velocity`` maps facet tags to ``g(x, y) -> (..., 2)``; tags missing
    from the map are no-slip. ``transport`` holds ``w_b`` on the tags that
    may form the inflow set, and ``vorticity`` the scalar inflow data of the
    simplified model.
    """

    velocity: dict[str, Callable] = field(default_factory=dict)
    transport: dict[str, Callable] = field(default_factory=dict)
    vorticity: dict[str, Callable] = field(default_factory=dict)
    provenance: str = CUSTOM

    def g(self, tag, x, y):
        return np.asarray(self.velocity.get(tag, _zero2)(x, y), float)

    def net_flux(self, mesh: Mesh, order=8):
        """``(int g.n ds, int |g.n| ds)`` over the tagged boundary."""
        from .fem.quadrature import interval_rule

        t, wq = interval_rule(order)
        net = total = 0.0
        for (a, b), tag in mesh.facet_tags.items():
            if tag not in self.velocity:
                continue
            pa, pb = mesh.vertices[a], mesh.vertices[b]
            pts = pa + t[:, None] * (pb - pa)
            n = outward_normal(mesh, (a, b))
            gn = self.g(tag, pts[:, 0], pts[:, 1]) @ n
            ln = np.linalg.norm(pb - pa)
            net += ln * wq @ gn
            total += ln * wq @ np.abs(gn)
        return net, total


def outward_normal(mesh: Mesh, edge):
    """Unit outward normal of a boundary edge."""
    owner = mesh.boundary_cells()[tuple(int(v) for v in edge)]
    a, b = edge
    pa, pb = mesh.vertices[a], mesh.vertices[b]
    t = pb - pa
    n = np.array([t[1], -t[0]]) / np.hypot(*t)
    centroid = mesh.vertices[mesh.cells[owner]].mean(axis=0)
    return -n if n @ (centroid - pa) > 0 else n


# ----------------------------------------------------------------------------
# duct

def duct_boundary_data(geom: DuctGeometry, params: FluidParams) -> BoundaryData:
    """Poiseuille profiles of equal flux at both ends of the duct.

    The inlet trace is ``U (1 - y^2)`` and the outlet ``U/H (1 - (y/H)^2)``,
    each carrying flux ``4U/3``. The transport trace is the exact ``w`` of
    the corresponding fully developed channel flow; the outlet version is
    only used when ``alpha1 < 0`` turns the outlet into the inflow set.
    """
    U, nu, H = params.U, params.nu, geom.H
    a1, a2 = params.alpha1, params.alpha2
    c = 4.0 * U**2 * (3 * a1 + 2 * a2) / nu

    def g_in(x, y):
        return _stack2(U * (1 - np.asarray(y) ** 2), 0.0 * np.asarray(x))

    def g_out(x, y):
        return _stack2(U / H * (1 - (np.asarray(y) / H) ** 2), 0.0 * np.asarray(x))

    def w_in(x, y):
        return _stack2(0.0 * np.asarray(x), c * np.asarray(y))

    def w_out(x, y):
        return _stack2(0.0 * np.asarray(x), c / H**6 * np.asarray(y))

    def z_in(x, y):
        return 2.0 * U * np.asarray(y) + 0.0 * np.asarray(x)

    def z_out(x, y):
        return 2.0 * U / H**3 * np.asarray(y) + 0.0 * np.asarray(x)

    return BoundaryData({INLET: g_in, OUTLET: g_out}, {INLET: w_in, OUTLET: w_out},
                        {INLET: z_in, OUTLET: z_out}, DUCT)


def duct_inflow_transport(geom: DuctGeometry, params: FluidParams, y):
    """Inlet ``w_b`` at heights ``y``, shape ``(..., 2)``."""
    return duct_boundary_data(geom, params).transport[INLET](0.0 * np.asarray(y), y)


def channel_boundary_data(params: FluidParams, height=(-1.0, 1.0)) -> BoundaryData:
    """Poiseuille data ``U (y - y0)(y1 - y)`` on both ends of a straight channel.

    For ``height=(-1, 1)`` this is the duct inlet profile.
    """
    y0, y1 = height
    U, nu = params.U, params.nu
    c = 4.0 * U**2 * (3 * params.alpha1 + 2 * params.alpha2) / nu
    ym = 0.5 * (y0 + y1)

    def g(x, y):
        y = np.asarray(y)
        return _stack2(U * (y - y0) * (y1 - y), 0.0 * np.asarray(x))

    def w(x, y):
        return _stack2(0.0 * np.asarray(x), c * (np.asarray(y) - ym))

    def z(x, y):
        return 2.0 * U * (np.asarray(y) - ym) + 0.0 * np.asarray(x)

    return BoundaryData({INLET: g, OUTLET: g}, {INLET: w, OUTLET: w},
                        {INLET: z, OUTLET: z}, CHANNEL)


# ----------------------------------------------------------------------------
# channel 0 < x1 < L, 0 < x2 < 1 with profile U x2 (L - x2)

@dataclass
class ChannelSolution:
    u: np.ndarray
    w: np.ndarray
    pi: np.ndarray
    p: np.ndarray
    du: np.ndarray
    ddu: np.ndarray
    dpi: np.ndarray


def _channel_constants(params, L, zero_mean):
    """Additive constants making pi and p zero mean over ``(0,L) x (0,1)``."""
    if not zero_mean:
        return 0.0, 0.0
    U, nu, a1, a2 = params.U, params.nu, params.alpha1, params.alpha2
    m2 = L**2 - 2 * L + 4.0 / 3.0  # mean of (L - 2 x2)^2 over 0 < x2 < 1
    c_pi = U * L - U**2 / (2 * nu) * (2 * a2 + 3 * a1) * m2
    c_p = U * nu * L - (2 * a1 + a2) * U**2 * m2
    return c_pi, c_p


def channel_oracle(params: FluidParams, L, point, flow="poiseuille", zero_mean=True):
    """Exact ``(u, w, p)`` of channel flow at ``point`` (shape ``(..., 2)``).

    ``flow="couette"`` gives the shear flow ``u = (U x2, 0)`` with ``w = 0``.
    """
    s = channel_solution(params, L, point, flow, zero_mean)
    return s.u, s.w, s.p


def channel_solution(params: FluidParams, L, point, flow="poiseuille", zero_mean=True):
    """All fields and derivatives of the channel solution."""
    x = np.asarray(point, float)
    x1, x2 = x[..., 0], x[..., 1]
    U, nu, a1, a2 = params.U, params.nu, params.alpha1, params.alpha2
    shape = x1.shape
    du = np.zeros(shape + (2, 2))
    ddu = np.zeros(shape + (2, 2, 2))
    zero = np.zeros(shape)
    if flow == "couette":
        u = _stack2(U * x2, zero)
        du[..., 0, 1] = U
        w = np.zeros(shape + (2,))
        pi = zero.copy()
        p = zero.copy()
        dpi = np.zeros(shape + (2,))
        return ChannelSolution(u, w, pi, p, du, ddu, dpi)
    if flow != "poiseuille":
        raise ValueError(f"unknown channel flow {flow!r}")
    s = L - 2 * x2
    u = _stack2(U * x2 * (L - x2), zero)
    du[..., 0, 1] = U * s
    ddu[..., 0, 1, 1] = -2 * U
    k = 2 * a2 + 3 * a1
    w = _stack2(zero, -2 * U**2 / nu * s * k)
    c_pi, c_p = _channel_constants(params, L, zero_mean)
    pi = -2 * U * x1 + U**2 / (2 * nu) * k * s**2 + c_pi
    dpi = _stack2(-2 * U + zero, -2 * U**2 / nu * k * s)
    p = -2 * U * nu * x1 + (2 * a1 + a2) * U**2 * s**2 + c_p
    return ChannelSolution(u, w, pi, p, du, ddu, dpi)


def channel_residual(params: FluidParams, L, point):
    """``(nu I + alpha1 u.grad) w - div N(u, pi)`` of the exact channel flow.

    The solution is independent of ``x1`` and ``u2 = 0``, so ``u.grad w``
    vanishes identically.
    """
    s = channel_solution(params, L, point)
    dn = divergence_n(s.u, s.du, s.ddu, s.dpi, params.alpha1, params.alpha2)
    return params.nu * s.w - dn


# ----------------------------------------------------------------------------
# pipe of unit radius along x3

@dataclass
class PipeSolution:
    u: np.ndarray
    w: np.ndarray
    pi: np.ndarray
    p: np.ndarray
    divN: np.ndarray


def pipe_oracle(params: FluidParams, point) -> PipeSolution:
    """Exact pipe Poiseuille fields at 3-D points; ``divN`` is evaluated
    from the exact derivatives through the generic kernel."""
    x = np.asarray(point, float)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    U, nu, a1, a2 = params.U, params.nu, params.alpha1, params.alpha2
    r2 = x1**2 + x2**2
    shape = x1.shape
    zero = np.zeros(shape)
    c = U**2 * (16 * a1 + 12 * a2)
    u = np.stack([zero, zero, U * (1 - r2)], axis=-1)
    w = np.stack([c / nu * x1, c / nu * x2, zero], axis=-1)
    pi = -4 * U * x3 + U**2 / nu * ((8 * a1 + 6 * a2) * r2 + 4 * a1)
    p = -4 * nu * U * x3 + 6 * U**2 * (2 * a1 + a2) * r2
    du = np.zeros(shape + (3, 3))
    du[..., 2, 0] = -2 * U * x1
    du[..., 2, 1] = -2 * U * x2
    ddu = np.zeros(shape + (3, 3, 3))
    ddu[..., 2, 0, 0] = -2 * U
    ddu[..., 2, 1, 1] = -2 * U
    dpi = np.stack([c / nu * x1, c / nu * x2, -4 * U + zero], axis=-1)
    dn = divergence_n(u, du, ddu, dpi, a1, a2)
    return PipeSolution(u, w, pi, p, dn)


def pipe_pressure_identity(params: FluidParams, point):
    """``p - (nu pi + alpha1 u3 d pi/d x3)``, zero for the exact solution."""
    s = pipe_oracle(params, point)
    return s.p - (params.nu * s.pi + params.alpha1 * s.u[..., 2] * (-4 * params.U))


__all__ = ["BoundaryData", "duct_boundary_data", "duct_inflow_transport",
           "channel_boundary_data", "channel_oracle", "channel_solution",
           "channel_residual", "pipe_oracle", "pipe_pressure_identity",
           "outward_normal", "DUCT", "CHANNEL", "PIPE", "CUSTOM",
           "WALL_BUFFER", "WALL_CONTRACTION"]
