"""Command line front end: ``g2duct <command> [options]``.

Exit status is 0 on success, 1 on configuration or usage errors and 2 when
an iteration fails to converge.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

from . import fem
from .config import _SCHEMA, MODELS, RunConfig, load_config
from .errors import ConfigError, G2DuctError, NonConvergence
from .mesh import Mesh, duct_mesh, read_mesh, write_mesh
from .observables import (ForceRecord, aitken_extrapolate, force_integral,
                          force_integral_nested, pressure_drop,
                          read_records, write_records)
from .sweep import (PI8, SweepGrid, default_workers, find_symmetry_axis,
                    fit_lines, identifiable_range_report, run_sweep, write_fits_csv,
                    write_series)

log = logging.getLogger("g2duct")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p, config=True):
    if config:
        p.add_argument("--config", help="run configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("--model", choices=MODELS, help="override solver.model")
        g = p.add_argument_group("configuration keys")
        for key in _SCHEMA:
            g.add_argument(f"--{key}", dest=f"cfg:{key}", metavar="V", help=argparse.SUPPRESS)
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="g2duct", description="Grade-two fluid flow through a contraction duct.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("mesh", help="build (or re-export) a mesh")
    _common(p)
    p.add_argument("--input", help="read this mesh file instead of building one")
    p.add_argument("--name", default="mesh.txt")

    p = sub.add_parser("solve", help="solve one state; writes fields and a manifest")
    _common(p)

    p = sub.add_parser("force", help="force record for one state")
    _common(p)

    p = sub.add_parser("sweep", help="force records over the sweep grid (CSV)")
    _common(p)
    p.add_argument("--workers", type=int, help="worker processes (default $G2DUCT_WORKERS or 1)")
    p.add_argument("--series", action="store_true", help="also write plot-ready series")

    for name, text in (("fit", "polynomial fits of f against U"),
                       ("cross", "crossing point of the extreme-alpha curves"),
                       ("symmetry", "reflection axis of f against theta")):
        p = sub.add_parser(name, help=text)
        p.add_argument("records", help="CSV written by 'sweep'")
        _common(p, config=False)
        p.add_argument("--U", type=float, help="flow rate to analyse (default smallest)")
        if name == "fit":
            p.add_argument("--degrees", default="1,2,3")
        if name == "symmetry":
            p.add_argument("--alpha", type=float, help="curve to analyse (default largest)")

    p = sub.add_parser("extrapolate", help="Aitken limit of three values")
    p.add_argument("values", nargs="*", type=float)
    p.add_argument("--records", help="CSV; extrapolate F/U along each line of three U")
    p.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("verify", help="closed-form self checks")
    p.add_argument("suite", nargs="*", metavar="SUITE",
                   help="all (default), channel, pipe, aitken or poiseuille")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return ap


# ----------------------------------------------------------------------------

def _overrides(args):
    out = {}
    for item in getattr(args, "set", []) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    for k, v in vars(args).items():
        if k.startswith("cfg:") and v is not None:
            out[k[4:]] = v
    if getattr(args, "model", None):
        out["solver.model"] = args.model
    return out


def _config(args) -> RunConfig:
    cfg = load_config(args.config, _overrides(args))
    if args.out:
        cfg.output.dir = args.out
    return cfg


def _mesh(cfg: RunConfig) -> Mesh:
    m = cfg.mesh
    if m.file:
        return read_mesh(m.file)
    return duct_mesh(cfg.geometry, m.n, m.split, m.r_u, m.r_b, m.r_p)


def _outdir(cfg):
    os.makedirs(cfg.output.dir, exist_ok=True)
    return cfg.output.dir


def _solve(cfg: RunConfig, mesh: Mesh):
    """``(state-like, velocity, auxiliary pressure, physical pressure)``."""
    from .grade2 import solve_grade2, solve_grade2_simplified
    from .stokes import solve_navier_stokes, solve_stokes_ipm
    from .analytic import duct_boundary_data

    p = cfg.fluid
    if cfg.model == "grade2":
        st = solve_grade2(mesh, p, cfg.geometry, cfg.solver, cfg.aa)
        return st, st.u, st.pi, st.p
    if cfg.model == "grade2-simplified":
        st = solve_grade2_simplified(mesh, p, cfg.geometry, cfg.solver, cfg.aa)
        q = st.q
        return st, st.u, q * (1.0 / p.nu), st.pressure()
    data = duct_boundary_data(cfg.geometry, p)
    if cfg.model == "stokes":
        st = solve_stokes_ipm(mesh, None, None, data, cfg.solver)
    else:
        # the boundary data already carries U, so the advection weight is 1 / nu
        st = solve_navier_stokes(mesh, None, 1.0 / p.nu, data, cfg.solver, cfg.aa)
    return st, st.u, st.pi, st.pi * p.nu


def cmd_mesh(args):
    cfg = _config(args)
    mesh = read_mesh(args.input) if args.input else _mesh(cfg)
    mesh.check()
    path = os.path.join(_outdir(cfg), args.name)
    write_mesh(mesh, path)
    print(f"{mesh.n_cells} cells, {mesh.n_vertices} vertices, "
          f"refinements {tuple(mesh.provenance)} -> {path}")
    return EXIT_OK


def _manifest(cfg, st, extra, path):
    doc = {"config": cfg.as_dict(), "model": cfg.model,
           "outer_iterations": getattr(st, "outer_iterations", 0),
           "converged": bool(getattr(st, "converged", True)),
           "residuals": list(getattr(st, "residuals", []) or []),
           "ipm_iterations": getattr(st, "ipm_iterations", None),
           "aa_log": list(getattr(st, "aa_log", []) or [])}
    doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, default=float)


def cmd_solve(args):
    cfg = _config(args)
    mesh = _mesh(cfg)
    st, u, pi, p = _solve(cfg, mesh)
    out = _outdir(cfg)
    fem.write_field_csv(u, os.path.join(out, "velocity.csv"))
    fem.write_field_csv(pi, os.path.join(out, "pi.csv"))
    if p is not None:
        fem.write_field_csv(p, os.path.join(out, "pressure.csv"))
    if getattr(st, "w", None) is not None:
        fem.write_field_csv(st.w, os.path.join(out, "transport.csv"))
    F = force_integral(u, pi, cfg.fluid.nu)
    extra = {"force": F, "F_over_U": F / cfg.fluid.U,
             "force_nested_nu": force_integral_nested(u, pi, cfg.fluid.nu),
             "velocity_H1": fem.norm(u, "H1"),
             "div_L2": fem.divergence_norm(u),
             "mesh": {"cells": mesh.n_cells, "vertices": mesh.n_vertices,
                      "provenance": list(mesh.provenance), "split": mesh.split_kind}}
    if p is not None:
        extra["pressure_drop"] = pressure_drop(p)
    _manifest(cfg, st, extra, os.path.join(out, "manifest.json"))
    print(f"{cfg.model}: F = {F:.9g}, F/U = {F / cfg.fluid.U:.9g}, "
          f"iterations {getattr(st, 'outer_iterations', 0)} -> {out}")
    return EXIT_OK


def cmd_force(args):
    cfg = _config(args)
    mesh = _mesh(cfg)
    st, u, pi, _ = _solve(cfg, mesh)
    F = force_integral(u, pi, cfg.fluid.nu)
    rec = ForceRecord.from_solve(F, cfg.fluid, getattr(st, "outer_iterations", 0),
                                 getattr(st, "converged", True), mesh)
    path = os.path.join(_outdir(cfg), cfg.output.records)
    write_records([rec], path)
    print(f"F = {F:.9g}, F/U = {rec.F_over_U:.9g} -> {path}")
    return EXIT_OK


def cmd_sweep(args):
    cfg = _config(args)
    if cfg.model != "grade2":
        raise ConfigError("sweeps use the grade2 model", field="solver.model")
    mesh = _mesh(cfg)
    sw = cfg.sweep
    grid = SweepGrid(sw.U, sw.nu, sw.alpha, cfg.thetas())
    workers = args.workers if args.workers is not None else default_workers()
    recs = run_sweep(grid, cfg.geometry, cfg.solver, cfg.aa, mesh, workers, sw.warm_start)
    out = _outdir(cfg)
    path = os.path.join(out, cfg.output.records)
    write_records(recs, path)
    if args.series:
        write_series(recs, os.path.join(out, "series"))
    bad = sum(not r.converged for r in recs)
    print(f"{len(recs)} points ({bad} not converged) -> {path}")
    return EXIT_NONCONVERGENCE if bad else EXIT_OK


def _records(args):
    recs = read_records(args.records)
    if args.U is not None:
        recs = [r for r in recs if math.isclose(r.U, args.U, rel_tol=1e-9)]
        if not recs:
            raise ConfigError(f"no records with U = {args.U:g}", field="U")
    return recs


def cmd_fit(args):
    recs = read_records(args.records)
    degrees = tuple(int(d) for d in args.degrees.split(","))
    fits = fit_lines(recs, degrees)
    for (nu, a, t), per in fits:
        res = "  ".join(f"deg {d}: {fr.max_residual:.3e}" for d, fr in per.items())
        print(f"nu={nu:g} alpha={a:g} theta={t / PI8:+.4f} pi/8  {res}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_fits_csv(fits, os.path.join(args.out, "fits.csv"))
    return EXIT_OK


def cmd_cross(args):
    recs = _records(args)
    rep = identifiable_range_report(recs, args.U)
    print(rep.text)
    if rep.crossing is None:
        return EXIT_OK
    print(f"theta_c = {rep.crossing / PI8:.6f} pi/8, f_c = {rep.f_crossing:.9g}")
    return EXIT_OK


def cmd_symmetry(args):
    from .sweep import _lines

    recs = _records(args)
    U, lines = _lines(recs, args.U)
    a = max(lines) if args.alpha is None else min(lines, key=lambda v: abs(v - args.alpha))
    t, f = lines[a]
    axis, score = find_symmetry_axis(t, f)
    print(f"U = {U:.6g}, alpha = {a:g}: theta_S = {axis / (PI8 / 2):.6f} pi/16 "
          f"(rms mismatch {score:.3e})")
    return EXIT_OK


def cmd_extrapolate(args):
    if args.records:
        from collections import defaultdict

        groups = defaultdict(list)
        for r in read_records(args.records):
            groups[(r.nu, r.alpha1, r.alpha2)].append((r.U, r.F_over_U))
        for (nu, a1, a2), pts in sorted(groups.items()):
            pts.sort()
            if len(pts) < 3:
                continue
            # the three smallest flow rates, largest first
            v = aitken_extrapolate(*(p[1] for p in pts[2::-1]))
            print(f"nu={nu:g} alpha=({a1:.6g}, {a2:.6g}): {v:.7g}")
        return EXIT_OK
    if len(args.values) != 3:
        raise ConfigError("extrapolate takes exactly three values (or --records)")
    print(f"{aitken_extrapolate(*args.values):.7g}")
    return EXIT_OK


def cmd_verify(args):
    from .verify import SUITES

    names = list(SUITES) if not args.suite or "all" in args.suite else args.suite
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ConfigError(f"unknown suite {unknown[0]!r}; choose from {', '.join(SUITES)}")
    ok = True
    for name in names:
        res = SUITES[name]()
        if args.verbose:
            for line in res.lines:
                print("  " + line)
        print(f"{name}: {'PASS' if res.passed else 'FAIL'}")
        ok &= res.passed
    return EXIT_OK if ok else EXIT_CONFIG


COMMANDS = {"mesh": cmd_mesh, "solve": cmd_solve, "force": cmd_force, "sweep": cmd_sweep,
            "fit": cmd_fit, "cross": cmd_cross, "symmetry": cmd_symmetry,
            "extrapolate": cmd_extrapolate, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergence as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (G2DuctError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
