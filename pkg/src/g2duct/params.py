"""Fluid parameters shared by the solvers and the boundary data."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass(frozen=True)
class FluidParams:
    """Viscosity ``nu``, grade-two parameters and the flow-rate scale ``U``.

    Either give ``alpha1``/``alpha2`` directly or the polar pair
    ``alpha``/``theta``; :meth:`polar` is the convenient constructor for the
    latter.
    """

    nu: float = 1.0
    alpha1: float = 0.0
    alpha2: float = 0.0
    U: float = 1.0
    alpha: float | None = field(default=None, compare=False)
    theta: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigError(f"viscosity must be positive, got {self.nu}", field="nu")
        if (self.alpha is None) != (self.theta is None):
            raise ConfigError("alpha and theta must be given together", field="alpha")
        if self.alpha is not None:
            if self.alpha1 or self.alpha2:
                raise ConfigError("give either (alpha1, alpha2) or (alpha, theta)", field="alpha")
            object.__setattr__(self, "alpha1", self.alpha * math.cos(self.theta))
            object.__setattr__(self, "alpha2", self.alpha * math.sin(self.theta))

    @classmethod
    def polar(cls, alpha, theta, nu=1.0, U=1.0) -> "FluidParams":
        return cls(nu=nu, U=U, alpha=float(alpha), theta=float(theta))

    @property
    def magnitude(self) -> float:
        return self.alpha if self.alpha is not None else math.hypot(self.alpha1, self.alpha2)

    @property
    def argument(self) -> float:
        return self.theta if self.theta is not None else math.atan2(self.alpha2, self.alpha1)

    def with_(self, **kw) -> "FluidParams":
        d = dict(nu=self.nu, U=self.U)
        if self.alpha is not None and not ({"alpha1", "alpha2"} & kw.keys()):
            d.update(alpha=self.alpha, theta=self.theta)
        else:
            d.update(alpha1=self.alpha1, alpha2=self.alpha2)
        if {"alpha", "theta"} & kw.keys():
            d.pop("alpha1", None)
            d.pop("alpha2", None)
        d.update(kw)
        return FluidParams(**d)
