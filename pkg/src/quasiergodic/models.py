"""Registry of bundled drift models.

Every bundled drift is a Laurent polynomial ``alpha(x) = sum_p c_p x**p``
with powers in ``{-1, 0, 1, 2, 3, ...}``, which gives Q in closed form:

    Q(y) = 2 c_{-1} log y + sum_{p >= 0} 2 c_p (y**(p+1) - 1) / (p + 1).
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .coeffs import DriftModel
from .errors import UsageError

__all__ = ["ModelSpec", "laurent_drift", "feller", "power_drift", "constant_drift", "build_model"]


def laurent_drift(coeffs, label="laurent"):
    """Build a :class:`DriftModel` from ``{power: coefficient}``.

    Powers below -1 are rejected: they make Q explode faster than any
    polynomial and are outside the closed form above.
    """
    terms = tuple(sorted((int(p), float(c)) for p, c in dict(coeffs).items() if c != 0.0))
    for p, c in terms:
        if p < -1:
            raise UsageError(f"power {p} not supported (need p >= -1)")
        if not math.isfinite(c):
            raise UsageError("drift coefficients must be finite")

    def alpha(x):
        if type(x) is float:
            return math.fsum(c * x ** p for p, c in terms) if terms else 0.0
        x = np.asarray(x, dtype=float) if np.ndim(x) else float(x)
        out = 0.0 * x
        for p, c in terms:
            out = out + c * x ** p
        return out

    def Q(y):
        if type(y) is float:
            out = 0.0
            for p, c in terms:
                out += 2.0 * c * (math.log(y) if p == -1 else (y ** (p + 1) - 1.0) / (p + 1))
            return out
        y = np.asarray(y, dtype=float) if np.ndim(y) else float(y)
        out = 0.0 * y
        for p, c in terms:
            if p == -1:
                out = out + 2.0 * c * np.log(y)
            else:
                out = out + 2.0 * c * (y ** (p + 1) - 1.0) / (p + 1)
        return out

    return DriftModel(evaluate=alpha, analytic_Q=Q, label=label, laurent=terms)


def feller(gamma=1.0, r=1.0, c=1.0):
    """Logistic Feller diffusion in the coordinates X = 2 sqrt(Y / gamma).

    The drift is ``1/(2x) - r x / 2 + c gamma x**3 / 8``.
    """
    for name, v in (("gamma", gamma), ("r", r), ("c", c)):
        if not (math.isfinite(v) and v > 0):
            raise UsageError(f"feller parameter {name} must be positive, got {v!r}")
    return laurent_drift({-1: 0.5, 1: -0.5 * r, 3: c * gamma / 8.0},
                         label=f"feller(gamma={gamma:g},r={r:g},c={c:g})")


def power_drift(a=0.0, b=0.0, d=0.0):
    """``alpha(x) = a/x + b x + d x**3``."""
    return laurent_drift({-1: a, 1: b, 3: d}, label=f"power-drift(a={a:g},b={b:g},d={d:g})")


def constant_drift(value=0.0):
    return laurent_drift({0: value}, label=f"constant-drift({value:g})")


_PARAMS = {
    "feller": ({"gamma": 1.0, "r": 1.0, "c": 1.0}, feller),
    "power-drift": ({"a": 0.0, "b": 0.0, "d": 0.0}, power_drift),
    "constant-drift": ({"value": 0.0}, constant_drift),
}


@dataclass(frozen=True)
class ModelSpec:
    """Name plus parameters of a registry model."""

    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in _PARAMS:
            raise UsageError(f"unknown model {self.name!r}; choose from {sorted(_PARAMS)}")
        defaults, _ = _PARAMS[self.name]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise UsageError(f"unknown parameters for {self.name}: {sorted(unknown)}")

    def resolved_params(self):
        defaults, _ = _PARAMS[self.name]
        return {**defaults, **{k: float(v) for k, v in self.params.items()}}

    def build(self):
        _, factory = _PARAMS[self.name]
        return factory(**self.resolved_params())


def build_model(name, **params):
    return ModelSpec(name, params).build()
