"""Parameter sweeps of the rheometer force and the identifiability analytics
built on them: polynomial fits in ``U``, the crossing of constant-``alpha``
curves in ``theta``, and the reflection axis of ``f(theta)``.
"""
from __future__ import annotations

import itertools
import math
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .anderson import AAConfig
from .errors import InsufficientSpan, NonConvergence, ParallelLines, RankDeficient
from .mesh import DuctGeometry, Mesh
from .observables import ForceRecord, force_integral
from .params import FluidParams
from .stokes import SolverConfig

PI8 = math.pi / 8


@dataclass
class SweepGrid:
    """Cartesian grid; points are visited with ``U`` varying fastest."""

    U: list
    nu: list = field(default_factory=lambda: [1.0])
    alpha: list = field(default_factory=lambda: [0.1])
    theta: list = field(default_factory=lambda: [math.pi / 4])

    def __post_init__(self):
        self.U = [float(u) for u in self.U]
        self.nu = [float(v) for v in self.nu]
        self.alpha = [float(a) for a in self.alpha]
        self.theta = [float(t) for t in self.theta]
        if any(u <= 0 for u in self.U):
            raise ValueError("all U must be positive")

    def points(self):
        for nu, a, t, U in itertools.product(self.nu, self.alpha, self.theta, self.U):
            yield FluidParams.polar(a, t, nu=nu, U=U)

    def __len__(self):
        return len(self.U) * len(self.nu) * len(self.alpha) * len(self.theta)


@dataclass
class FitResult:
    degree: int
    coefficients: np.ndarray
    residuals: np.ndarray
    max_residual: float

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, float), self.coefficients)


# ----------------------------------------------------------------------------
# sweep execution

def solve_point(params: FluidParams, mesh: Mesh, geom, config, aa_config, w0=None):
    """Force record for one parameter point; failures are flagged, and the
    force of the last iterate is kept when one exists."""
    from .grade2 import solve_grade2

    try:
        st = solve_grade2(mesh, params, geom, config, aa_config, w0=w0, raise_on_failure=False)
    except NonConvergence as exc:
        st = exc.state
        if st is None or not hasattr(st, "u"):
            return ForceRecord.from_solve(math.nan, params, len(exc.history), False, mesh), None
    try:
        F = force_integral(st.u, st.pi, params.nu)
    except Exception:  # pragma: no cover - broken state
        F = math.nan
    if not st.converged:
        F = F if np.isfinite(F) else math.nan
    return ForceRecord.from_solve(F, params, st.outer_iterations, st.converged, mesh), st


_WORKER = {}


def _init_worker(mesh, geom, config, aa_config):
    _WORKER.update(mesh=mesh, geom=geom, config=config, aa=aa_config)


def _run_worker(params):
    w = _WORKER
    return solve_point(params, w["mesh"], w["geom"], w["config"], w["aa"])[0]


def default_workers():
    try:
        return max(1, int(os.environ.get("G2DUCT_WORKERS", "1")))
    except ValueError:
        return 1


def run_sweep(grid: SweepGrid, geom: DuctGeometry, config: SolverConfig | None,
              aa_config: AAConfig | None, mesh: Mesh, workers=None, warm_start=False):
    """One :class:`ForceRecord` per grid point, in grid order.

    With ``warm_start`` (sequential only) the transport field of the nearest
    already solved ``U`` on the same ``(nu, alpha, theta)`` line seeds the
    next solve.
    """
    config = config or SolverConfig()
    pts = list(grid.points())
    if not pts:
        return []
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers > 1 and not warm_start:
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(mesh, geom, config, aa_config)) as ex:
            return list(ex.map(_run_worker, pts))
    out = []
    done = defaultdict(list)
    for p in pts:
        key = (p.nu, p.alpha, p.theta)
        w0 = None
        if warm_start and done[key]:
            w0 = min(done[key], key=lambda t: abs(t[0] - p.U))[1]
        rec, st = solve_point(p, mesh, geom, config, aa_config, w0)
        if warm_start and st is not None and st.converged:
            done[key].append((p.U, st.w))
        out.append(rec)
    return out


# ----------------------------------------------------------------------------
# fits

def fit_polynomial(x, f, degree) -> FitResult:
    """Least-squares polynomial of the given degree; coefficients ascending."""
    x = np.asarray(x, float)
    f = np.asarray(f, float)
    if x.shape != f.shape or x.ndim != 1:
        raise ValueError("x and f must be 1-D arrays of equal length")
    if len(np.unique(x)) <= degree:
        raise RankDeficient(f"{len(np.unique(x))} distinct abscissae cannot fit degree {degree}")
    # centred and scaled abscissae keep the Vandermonde system well conditioned
    c, s = x.mean(), max(np.ptp(x) / 2, 1e-300)
    t = (x - c) / s
    V = np.vander(t, degree + 1, increasing=True)
    coef_t, *_ = np.linalg.lstsq(V, f, rcond=None)
    # back to powers of x
    P = np.polynomial.Polynomial(coef_t, domain=[c - s, c + s], window=[-1, 1])
    coef = P.convert().coef
    coef = np.concatenate([coef, np.zeros(degree + 1 - len(coef))])
    r = f - V @ coef_t
    return FitResult(degree, coef, r, float(np.max(np.abs(r))))


# ----------------------------------------------------------------------------
# crossing and symmetry

def find_crossing(theta, f_low, f_high):
    """``theta`` where the piecewise-linear curves of ``f_low`` and
    ``f_high`` intersect.

    The bracket is the sample interval where ``f_high - f_low`` changes
    sign (the first one from the left); without a sign change the two
    samples with the smallest gap are used and the secants extrapolated.
    """
    t = np.asarray(theta, float)
    a = np.asarray(f_low, float)
    b = np.asarray(f_high, float)
    order = np.argsort(t)
    t, a, b = t[order], a[order], b[order]
    if len(t) < 2:
        raise InsufficientSpan("need at least two theta samples")
    d = b - a
    idx = np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) <= 0)
    if len(idx):
        i = int(idx[0])
    else:
        j = int(np.argmin(np.abs(d)))
        i = min(j, len(t) - 2)
    t0, t1 = t[i], t[i + 1]
    slope = (d[i + 1] - d[i]) / (t1 - t0)
    if slope == 0 or abs(slope) < 1e-15 * max(np.abs(d[i:i + 2]).max(), 1e-300) / (t1 - t0):
        raise ParallelLines("the two secants are parallel")
    tc = t0 - d[i] / slope
    fc = a[i] + (a[i + 1] - a[i]) / (t1 - t0) * (tc - t0)
    return float(tc), float(fc)


def _reflection_score(ts, t, f, min_pairs):
    tr = 2 * ts - t
    inside = (tr >= t[0] - 1e-12) & (tr <= t[-1] + 1e-12) & (np.abs(tr - t) > 1e-12)
    if inside.sum() < min_pairs:
        return math.inf
    g = np.interp(tr[inside], t, f)
    return float(np.mean((f[inside] - g) ** 2))


def find_symmetry_axis(theta, f, min_pairs=4, resolution=4001):
    """Axis ``theta_S`` minimising the mean squared mismatch of reflected
    sample pairs, with off-grid reflections interpolated linearly.

    Returns ``(theta_S, score)``; ``score`` is the root mean squared
    mismatch at the optimum.
    """
    t = np.asarray(theta, float)
    f = np.asarray(f, float)
    order = np.argsort(t)
    t, f = t[order], f[order]
    if len(t) < min_pairs + 1:
        raise InsufficientSpan(f"need more than {min_pairs} samples")
    grid = np.linspace(t[0], t[-1], resolution)
    scores = np.array([_reflection_score(s, t, f, min_pairs) for s in grid])
    if not np.isfinite(scores).any():
        raise InsufficientSpan("no candidate axis has enough reflected pairs")
    k = int(np.argmin(scores))
    h = grid[1] - grid[0]
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    best, score = grid[k], scores[k]
    if hi > lo:
        with np.errstate(invalid="ignore"):  # inf scores near the ends of the range
            r = minimize_scalar(lambda s: _reflection_score(s, t, f, min_pairs), bounds=(lo, hi),
                                method="bounded", options={"xatol": h * 1e-3})
        if r.fun < score:
            best, score = float(r.x), float(r.fun)
    return float(best), float(math.sqrt(score))


# ----------------------------------------------------------------------------
# reports

@dataclass
class RangeReport:
    U: float
    alpha_low: float
    alpha_high: float
    crossing: float | None
    f_crossing: float | None
    symmetry_axis: float | None
    symmetry_score: float | None
    interval: tuple | None
    alpha_identifiable: bool
    text: str = ""


def _lines(records, U=None):
    """``{alpha: (theta array, f array)}`` at one flow rate (smallest by default)."""
    Us = sorted({r.U for r in records})
    if not Us:
        raise InsufficientSpan("no records")
    U = Us[0] if U is None else min(Us, key=lambda u: abs(u - U))
    lines = defaultdict(list)
    for r in records:
        if r.U == U and np.isfinite(r.F_over_U):
            lines[round(r.alpha, 14)].append((r.theta, r.F_over_U))
    out = {}
    for a, pts in lines.items():
        pts.sort()
        out[a] = (np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
    return U, out


def identifiable_range_report(records, U=None, rel_tol=1e-9, symmetry_tol=1e-3):
    """Crossing, symmetry axis and the implied identifiable interval in ``theta``.

    ``alpha`` is declared unidentifiable when the extreme-``alpha`` curves
    agree to ``rel_tol``. A symmetry axis is only claimed when its RMS
    mismatch is below ``symmetry_tol`` times the spread of ``f``.
    """
    U, lines = _lines(records, U)
    if len(lines) < 2:
        raise InsufficientSpan("need curves for at least two alpha magnitudes")
    a_lo, a_hi = min(lines), max(lines)
    t_lo, f_lo = lines[a_lo]
    t_hi, f_hi = lines[a_hi]
    common = np.intersect1d(np.round(t_lo, 12), np.round(t_hi, 12))
    sel_lo = np.isin(np.round(t_lo, 12), common)
    sel_hi = np.isin(np.round(t_hi, 12), common)
    t, a, b = t_lo[sel_lo], f_lo[sel_lo], f_hi[sel_hi]
    scale = max(np.abs(np.concatenate([a, b])).max(), 1e-300)
    full = (float(t.min()), float(t.max()))
    if np.max(np.abs(b - a)) <= rel_tol * scale:
        text = (f"U = {U:.6g}: f does not depend on alpha (max gap {np.max(np.abs(b - a)):.3e});"
                " alpha is unidentifiable for every theta")
        return RangeReport(U, a_lo, a_hi, None, None, None, None, None, False, text)
    d = b - a
    crossing = fc = None
    if np.any(np.sign(d[:-1]) * np.sign(d[1:]) <= 0):
        crossing, fc = find_crossing(t, a, b)
    axis = score = None
    spread = max(np.ptp(f_hi), 1e-300)
    try:
        ax, sc = find_symmetry_axis(t_hi, f_hi)
        if sc <= symmetry_tol * spread:
            axis, score = ax, sc
        else:
            score = sc
    except InsufficientSpan:
        pass
    lo = crossing if crossing is not None else full[0]
    hi = axis if axis is not None else full[1]
    interval = (lo, hi) if hi > lo else (hi, lo)
    lines_txt = [f"U = {U:.6g}, alpha in [{a_lo:g}, {a_hi:g}]"]
    if crossing is not None:
        lines_txt.append(f"crossing at theta = {crossing / PI8:.6f} pi/8 (f = {fc:.9g}); "
                         "alpha cannot be resolved there")
    else:
        lines_txt.append("no crossing of the constant-alpha curves in the sampled range")
    if axis is not None:
        lines_txt.append(f"symmetry axis theta_S = {axis / PI8:.6f} pi/8 (rms mismatch {score:.3e}); "
                         "theta and its reflection give the same f")
    else:
        lines_txt.append("no reflection symmetry detected"
                         + (f" (rms mismatch {score:.3e})" if score is not None else ""))
    lines_txt.append(f"identifiable interval: ({interval[0] / PI8:.6f}, {interval[1] / PI8:.6f}] in pi/8 units")
    return RangeReport(U, a_lo, a_hi, crossing, fc, axis, score, interval, True, "\n".join(lines_txt))


def fit_lines(records, degrees=(1, 2, 3)):
    """Fits of ``f`` against ``U`` for every ``(nu, alpha, theta)`` line."""
    groups = defaultdict(list)
    for r in records:
        if np.isfinite(r.F_over_U):
            groups[(r.nu, round(r.alpha, 14), round(r.theta, 14))].append((r.U, r.F_over_U))
    out = []
    for key in sorted(groups):
        pts = sorted(groups[key])
        U = np.array([p[0] for p in pts])
        f = np.array([p[1] for p in pts])
        fits = {d: fit_polynomial(U, f, d) for d in degrees if len(np.unique(U)) > d}
        out.append((key, fits))
    return out


def write_fits_csv(fits, path):
    with open(path, "w") as fh:
        fh.write("nu,alpha,theta,degree,max_residual,coefficients\n")
        for (nu, a, t), per in fits:
            for d, fr in per.items():
                coefs = " ".join(f"{c:.12g}" for c in fr.coefficients)
                fh.write(f"{nu:.12g},{a:.12g},{t:.12g},{d},{fr.max_residual:.6e},{coefs}\n")


def write_series(records, directory):
    """Plot-ready two-column files: ``f`` against ``U`` for each line and
    ``f`` against ``theta`` (in pi/8 units) for each ``(nu, alpha, U)``."""
    os.makedirs(directory, exist_ok=True)
    by_line = defaultdict(list)
    by_theta = defaultdict(list)
    for r in records:
        by_line[(r.nu, r.alpha, r.theta)].append((r.U, r.F_over_U))
        by_theta[(r.nu, r.alpha, r.U)].append((r.theta / PI8, r.F_over_U))
    paths = []
    for (nu, a, t), pts in sorted(by_line.items()):
        p = os.path.join(directory, f"f_vs_U_nu{nu:g}_a{a:g}_t{t / PI8:+.4f}.dat")
        np.savetxt(p, sorted(pts), fmt="%.12g", header="U f", comments="# ")
        paths.append(p)
    for (nu, a, U), pts in sorted(by_theta.items()):
        p = os.path.join(directory, f"f_vs_theta_nu{nu:g}_a{a:g}_U{U:.6g}.dat")
        np.savetxt(p, sorted(pts), fmt="%.12g", header="theta/(pi/8) f", comments="# ")
        paths.append(p)
    return paths
