"""Self-checks against closed-form solutions.

Each suite returns a :class:`SuiteResult`; ``passed`` is the conjunction
of its checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .analytic import (channel_boundary_data, channel_residual, channel_solution,
                       pipe_oracle, pipe_pressure_identity)
from .mesh import CROSSED, WALL_CONTRACTION, build_rectangle_mesh
from .observables import aitken_extrapolate, aitken_sensitivity, force_integral
from .params import FluidParams
from .stokes import SolverConfig, solve_stokes_ipm, velocity_space

# published force ratios (U = 2^-6, 2^-7, 2^-8), five decimals, with their
# extrapolated limits
AITKEN_TRIPLES = (
    ((-11.00226, -10.97838, -10.96646), -10.95458),
    ((-11.01962, -10.98706, -10.97080), -10.95458),
    ((-11.02835, -10.99141, -10.97297), -10.95458),
    ((-21.95676, -21.93292, -21.92101), -21.90911),
    ((-21.97412, -21.94159, -21.92534), -21.90912),
    ((-21.98282, -21.94593, -21.92751), -21.90913),
)
PRINTED_HALF_ULP = 5e-6


def aitken_bound(triple, half_ulp=PRINTED_HALF_ULP):
    """Largest change of the limit when each input moves by ``half_ulp``
    (first order), plus the rounding of the limit itself."""
    return half_ulp * (1.0 + float(np.abs(aitken_sensitivity(*triple)).sum()))


@dataclass
class SuiteResult:
    name: str
    passed: bool = True
    lines: list = field(default_factory=list)

    def check(self, label, value, tol):
        ok = bool(np.isfinite(value) and abs(value) <= tol)
        self.passed &= ok
        self.lines.append(f"{'ok  ' if ok else 'FAIL'} {label}: {value:.3e} (tol {tol:.0e})")
        return ok


def _params_grid():
    for nu in (1.0, 2.0, 0.5):
        for a1, a2 in ((0.1, 0.1), (0.3, -0.2), (0.0, 0.05)):
            for U in (1.0, 2.0 ** -4):
                yield FluidParams(nu=nu, alpha1=a1, alpha2=a2, U=U)


def verify_channel(n_points=200, tol=1e-12) -> SuiteResult:
    """Residual of the grade-two transport equation for exact channel flow,
    and the agreement of the two pressure representations up to a constant."""
    res = SuiteResult("channel")
    rng = np.random.default_rng(0)
    for L in (1.0, 2.0):
        pts = rng.uniform((0, 0), (L, 1), size=(n_points, 2))
        worst = worst_p = 0.0
        for p in _params_grid():
            r = channel_residual(p, L, pts)
            scale = max(1.0, np.abs(p.nu * channel_solution(p, L, pts).w).max())
            worst = max(worst, np.abs(r).max() / scale)
            s = channel_solution(p, L, pts, zero_mean=False)
            gap = s.p - (p.nu * s.pi + p.alpha1 * np.einsum("...i,...i->...", s.u, s.dpi))
            worst_p = max(worst_p, np.ptp(gap) / max(1.0, np.abs(s.p).max()))
        res.check(f"transport residual, L={L:g}", worst, tol)
        res.check(f"pressure identity (spread), L={L:g}", worst_p, tol)
    return res


def verify_pipe(n_points=1000, tol=1e-13) -> SuiteResult:
    """``div N = nu w`` and the pressure identity of pipe Poiseuille flow."""
    res = SuiteResult("pipe")
    rng = np.random.default_rng(1)
    r = np.sqrt(rng.uniform(0, 1, n_points))
    t = rng.uniform(0, 2 * math.pi, n_points)
    pts = np.column_stack([r * np.cos(t), r * np.sin(t), rng.uniform(-1, 1, n_points)])
    worst = worst_p = 0.0
    for p in _params_grid():
        s = pipe_oracle(p, pts)
        worst = max(worst, np.abs(s.divN - p.nu * s.w).max())
        worst_p = max(worst_p, np.abs(pipe_pressure_identity(p, pts)).max())
    res.check(f"div N - nu w at {n_points} points", worst, tol)
    res.check("pressure identity", worst_p, tol)
    return res


def verify_aitken() -> SuiteResult:
    """Extrapolated limits of the published force triples.

    The inputs carry five decimals, so each limit is compared against the
    printed value within the propagated rounding of its inputs.
    """
    res = SuiteResult("aitken")
    for triple, limit in AITKEN_TRIPLES:
        v = aitken_extrapolate(*triple)
        res.check(f"{triple} -> {v:.7g} vs {limit}", v - limit, aitken_bound(triple))
    return res


def poiseuille_check(n=4, nu=1.0, U=1.0, length=1.0, config: SolverConfig | None = None):
    """Degree-4 penalty Stokes solve of channel Poiseuille flow.

    Returns ``(H1 error, F/U + 4 nu L, result)`` for the channel
    ``(0, L) x (-1, 1)`` whose walls carry the contraction tag.
    """
    mesh = build_rectangle_mesh(0.0, length, -1.0, 1.0, n, CROSSED, wall_tag=WALL_CONTRACTION)
    params = FluidParams(nu=nu, U=U)
    data = channel_boundary_data(params)
    config = config or SolverConfig()
    vs = velocity_space(mesh, config.degree)
    st = solve_stokes_ipm(mesh, vs, None, data, config)
    exact = vs.interpolate(data.velocity["inlet"])
    err = fem.norm(st.u - exact, "H1")
    F = force_integral(st.u, st.pi, nu)
    return err, F / U + 4 * nu * length, st


def verify_poiseuille(tol_u=1e-9, tol_f=1e-8) -> SuiteResult:
    res = SuiteResult("poiseuille")
    for nu, L in ((1.0, 1.0), (2.0, 2.0)):
        err, ferr, _ = poiseuille_check(nu=nu, length=L)
        res.check(f"H1 velocity error, nu={nu:g} L={L:g}", err, tol_u)
        res.check(f"F/U + 4 nu L, nu={nu:g} L={L:g}", ferr, tol_f)
    return res


SUITES = {"channel": verify_channel, "pipe": verify_pipe, "aitken": verify_aitken,
          "poiseuille": verify_poiseuille}
