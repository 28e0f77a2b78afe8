"""Run configuration in a flat ``section.key = value`` text format.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Angles in the sweep block are multiples of ``sweep.theta_unit``, which
accepts ``pi/8``-style fractions.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields

from .anderson import AAConfig
from .errors import ConfigError
from .mesh import CROSSED, SPLITS, DuctGeometry
from .params import FluidParams
from .stokes import SolverConfig

MODELS = ("stokes", "navier-stokes", "grade2", "grade2-simplified")


@dataclass
class MeshBlock:
    n: int = 2
    split: str = CROSSED
    r_u: int = 0
    r_b: int = 0
    r_p: int = 0
    smoothed_corners: bool = False
    chamfer: float = 0.05
    file: str = ""


@dataclass
class SweepBlock:
    U: list = field(default_factory=lambda: [2.0 ** -6, 2.0 ** -7, 2.0 ** -8])
    nu: list = field(default_factory=lambda: [1.0])
    alpha: list = field(default_factory=lambda: [0.1])
    theta: list = field(default_factory=lambda: [2.0])
    theta_unit: float = math.pi / 8
    warm_start: bool = False


@dataclass
class OutputBlock:
    dir: str = "out"
    records: str = "records.csv"


@dataclass
class RunConfig:
    geometry: DuctGeometry = field(default_factory=DuctGeometry)
    mesh: MeshBlock = field(default_factory=MeshBlock)
    fluid: FluidParams = field(default_factory=lambda: FluidParams(nu=1.0, alpha1=0.1,
                                                                   alpha2=0.1, U=2.0 ** -6))
    solver: SolverConfig = field(default_factory=SolverConfig)
    model: str = "grade2"
    aa: AAConfig | None = field(default_factory=AAConfig)
    sweep: SweepBlock = field(default_factory=SweepBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def as_dict(self):
        """Every setting, flattened to dotted keys (used for manifests)."""
        out = {}
        g = self.geometry
        for k in ("b_i", "b_o", "L", "H", "chamfer"):
            out[f"geometry.{k}"] = getattr(g, k)
        for f in fields(self.mesh):
            out[f"mesh.{f.name}"] = getattr(self.mesh, f.name)
        p = self.fluid
        out.update({"fluid.nu": p.nu, "fluid.alpha1": p.alpha1, "fluid.alpha2": p.alpha2,
                    "fluid.alpha": p.magnitude, "fluid.theta": p.argument, "fluid.U": p.U})
        for k, v in self.solver.as_dict().items():
            out[f"solver.{k}"] = v
        out["solver.model"] = self.model
        aa = self.aa or AAConfig(m_max=0)
        for f in fields(aa):
            out[f"aa.{f.name}"] = getattr(aa, f.name)
        for f in fields(self.sweep):
            out[f"sweep.{f.name}"] = getattr(self.sweep, f.name)
        for f in fields(self.output):
            out[f"output.{f.name}"] = getattr(self.output, f.name)
        return out

    def thetas(self):
        return [t * self.sweep.theta_unit for t in self.sweep.theta]


_NUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_ANGLE = re.compile(rf"^\s*({_NUM})?\s*\*?\s*(pi)?\s*(?:/\s*({_NUM}))?\s*$")


def parse_number(text: str) -> float:
    """Float, optionally written as a multiple of pi (``3pi/16``, ``-pi/8``)."""
    s = text.strip().lower().replace("π", "pi")
    try:
        return float(s)
    except ValueError:
        pass
    neg = s.startswith("-")
    if neg or s.startswith("+"):
        s = s[1:]
    m = _ANGLE.match(s)
    if not m or not (m.group(1) or m.group(2)):
        raise ValueError(f"not a number: {text!r}")
    v = float(m.group(1)) if m.group(1) else 1.0
    if m.group(2):
        v *= math.pi
    if m.group(3):
        v /= float(m.group(3))
    return -v if neg else v


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(text):
    return [parse_number(t) for t in text.split(",") if t.strip()]


_INT = int
_SCHEMA = {
    "geometry.b_i": float, "geometry.b_o": float, "geometry.L": float, "geometry.H": float,
    "geometry.chamfer": float,
    "mesh.n": _INT, "mesh.split": str, "mesh.r_u": _INT, "mesh.r_b": _INT, "mesh.r_p": _INT,
    "mesh.smoothed_corners": _bool, "mesh.chamfer": float, "mesh.file": str,
    "fluid.nu": float, "fluid.alpha1": float, "fluid.alpha2": float,
    "fluid.alpha": float, "fluid.theta": float, "fluid.U": float,
    "solver.rho": float, "solver.tol_outer": float, "solver.tol_div": float,
    "solver.ipm_max": _INT, "solver.outer_max": _INT, "solver.early_exit_ratio": float,
    "solver.degree": _INT, "solver.early_exit": _bool, "solver.warm_start": _bool,
    "solver.outer_norm": str, "solver.blowup": float, "solver.upwind": _bool,
    "solver.model": str,
    "aa.m_max": _INT, "aa.sigma_min": float, "aa.sigma_max": float, "aa.beta": float,
    "sweep.U": _list, "sweep.nu": _list, "sweep.alpha": _list, "sweep.theta": _list,
    "sweep.theta_unit": float, "sweep.warm_start": _bool,
    "output.dir": str, "output.records": str,
}


def _convert(key, raw, line=None):
    conv = _SCHEMA.get(key)
    if conv is None:
        raise ConfigError("unknown key", field=key, line=line)
    try:
        if conv is float:
            return parse_number(raw)
        if conv is _INT:
            v = parse_number(raw)
            if v != int(v):
                raise ValueError(f"not an integer: {raw!r}")
            return int(v)
        return conv(raw.strip())
    except ValueError as exc:
        raise ConfigError(str(exc), field=key, line=line) from None


def parse_config_text(text: str, overrides=None) -> RunConfig:
    """Parse and validate; ``overrides`` is a mapping of extra ``key: raw``."""
    values = {}
    lines = {}
    for no, raw in enumerate(text.splitlines(), 1):
        s = raw.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"expected 'key = value', got {s!r}", line=no)
        k, v = (t.strip() for t in s.split("=", 1))
        if k in values:
            raise ConfigError("key given twice", field=k, line=no)
        values[k] = _convert(k, v, no)
        lines[k] = no
    for k, v in (overrides or {}).items():
        values[k] = _convert(k, v)
        lines.pop(k, None)
    return build_config(values, lines)


def build_config(values: dict, lines: dict | None = None) -> RunConfig:
    lines = lines or {}

    def fail(msg, key):
        raise ConfigError(msg, field=key, line=lines.get(key))

    def sect(prefix):
        return {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith(prefix + ".")}

    mesh = MeshBlock(**{k: v for k, v in sect("mesh").items()})
    if mesh.split not in SPLITS:
        fail(f"split must be one of {SPLITS}", "mesh.split")
    if mesh.n < 1:
        fail("n must be at least 1", "mesh.n")
    for k in ("r_u", "r_b", "r_p"):
        if getattr(mesh, k) < 0:
            fail("refinement counts are nonnegative", f"mesh.{k}")
    gd = dict(b_i=1.0, b_o=1.0, L=1.0, H=0.5)
    gd.update(sect("geometry"))
    if mesh.smoothed_corners and "chamfer" not in gd:
        gd["chamfer"] = mesh.chamfer
    try:
        geom = DuctGeometry(**gd)
    except ValueError as exc:
        fail(str(exc), "geometry." + next(iter(sect("geometry")), "H"))

    fl = sect("fluid")
    cart = {"alpha1", "alpha2"} & fl.keys()
    polar = {"alpha", "theta"} & fl.keys()
    if cart and polar:
        keys = ["fluid." + k for k in sorted(cart | polar)]
        fail("give either (alpha1, alpha2) or (alpha, theta), not both",
             max(keys, key=lambda k: lines.get(k, 0)))
    if len(polar) == 1:
        fail("alpha and theta must be given together", "fluid." + next(iter(polar)))
    base = dict(nu=fl.get("nu", 1.0), U=fl.get("U", 2.0 ** -6))
    if base["nu"] <= 0:
        fail("viscosity must be positive", "fluid.nu")
    if polar:
        params = FluidParams.polar(fl["alpha"], fl["theta"], **base)
    else:
        params = FluidParams(alpha1=fl.get("alpha1", 0.1), alpha2=fl.get("alpha2", 0.1), **base)

    so = sect("solver")
    model = so.pop("model", "grade2")
    if model not in MODELS:
        fail(f"model must be one of {MODELS}", "solver.model")
    try:
        solver = SolverConfig(**so)
    except ConfigError as exc:
        raise ConfigError(exc.message, field=exc.field, line=lines.get(exc.field)) from None
    if model == "grade2-simplified":
        scale = max(abs(params.alpha1), abs(params.alpha2), 1.0)
        if abs(params.alpha1 + params.alpha2) > 1e-14 * scale:
            fail("grade2-simplified needs alpha1 + alpha2 = 0", "fluid.alpha2")
    ad = sect("aa")
    try:
        aa = AAConfig(**ad)
    except ConfigError as exc:
        raise ConfigError(exc.message, field=exc.field, line=lines.get(exc.field)) from None
    sw = SweepBlock(**sect("sweep"))
    if any(u <= 0 for u in sw.U):
        fail("sweep U values must be positive", "sweep.U")
    out = OutputBlock(**sect("output"))
    return RunConfig(geom, mesh, params, solver, model, aa if aa.m_max > 0 else None, sw, out)


def load_config(path, overrides=None) -> RunConfig:
    """Read ``path`` (``None`` or ``""`` means defaults only)."""
    if not path:
        return parse_config_text("", overrides)
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config_text(text, overrides)
