"""Run configuration: one JSON document, overridable key by key.

Keys are addressed by dot-separated paths such as ``sim.n_paths`` or
``model.params.gamma``. The hash used for provenance covers everything that
can change a result, and excludes the output directory and the worker count.
"""
from dataclasses import dataclass, fields
import copy
import hashlib
import json

from . import __version__
from .coeffs import QuadratureSettings
from .errors import UsageError
from .mc import SimConfig
from .models import ModelSpec

__all__ = ["DEFAULT_CONFIG", "RunConfig", "load_config", "apply_override", "leaf_paths", "config_hash"]

DEFAULT_CONFIG = {
    "model": {"name": "feller", "params": {"gamma": 1.0, "r": 1.0, "c": 1.0}},
    "quadrature": {f.name: f.default for f in fields(QuadratureSettings)},
    "grid": {"n": 2000, "left_cut": 1e-4, "right_cut": "auto", "k": 64},
    "sim": {
        "dt": 1e-3,
        "n_paths": 200_000,
        "seed": 0,
        "absorb_threshold": 0.0,
        "bridge_correction": True,
        "substep_threshold": 0.05,
        "x0": 1.0,
        "workers": 1,
    },
    "iu": {"q": 3.0},
    "outputs": "out",
}

_UNHASHED = ("outputs", "sim.workers")


def leaf_paths(doc=DEFAULT_CONFIG, prefix=""):
    """Dot paths of every scalar in ``doc``."""
    out = []
    for k, v in doc.items():
        p = f"{prefix}{k}"
        if isinstance(v, dict):
            out.extend(leaf_paths(v, p + "."))
        else:
            out.append(p)
    return out


def _coerce(text, like):
    if isinstance(like, bool):
        low = str(text).lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"expected a boolean, got {text!r}")
    if isinstance(like, int) and not isinstance(like, bool):
        try:
            return int(float(text)) if float(text).is_integer() else int(text)
        except ValueError as exc:
            raise UsageError(f"expected an integer, got {text!r}") from exc
    if isinstance(like, float):
        try:
            return float(text)
        except ValueError as exc:
            raise UsageError(f"expected a number, got {text!r}") from exc
    if like == "auto":
        return "auto" if text == "auto" else _coerce(text, 1.0)
    return text


def apply_override(doc, path, value):
    """Set ``doc[a][b]...`` for ``path = "a.b..."``; string values are coerced to the default's type."""
    keys = path.split(".")
    if path == "model.name" and value != doc["model"].get("name"):
        # parameters of the previous model do not carry over
        doc["model"]["params"] = {}
    node = doc
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise UsageError(f"{path}: {k} is not a section")
    like = _lookup(DEFAULT_CONFIG, keys)
    node[keys[-1]] = _coerce(value, like) if isinstance(value, str) and like is not None else value


def _lookup(doc, keys):
    for k in keys:
        if not isinstance(doc, dict) or k not in doc:
            return None
        doc = doc[k]
    return doc


def _merge(base, extra, where=""):
    for k, v in extra.items():
        if k not in base and where not in ("model.params",):
            raise UsageError(f"unknown configuration key {where + '.' if where else ''}{k}")
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            sub = f"{where}.{k}" if where else k
            if sub == "model.params":
                base[k] = dict(v)
            else:
                _merge(base[k], v, sub)
        else:
            base[k] = v


@dataclass(frozen=True)
class RunConfig:
    raw: dict

    @property
    def model(self):
        m = self.raw["model"]
        return ModelSpec(m["name"], dict(m.get("params", {})))

    @property
    def quadrature(self):
        return QuadratureSettings(**self.raw["quadrature"])

    @property
    def grid(self):
        g = self.raw["grid"]
        rc = g["right_cut"]
        return {"n": int(g["n"]), "left_cut": float(g["left_cut"]),
                "right_cut": None if rc in (None, "auto") else float(rc), "k": int(g["k"])}

    @property
    def sim(self):
        s = self.raw["sim"]
        return SimConfig(dt=float(s["dt"]), n_paths=int(s["n_paths"]), seed=int(s["seed"]),
                         absorb_threshold=float(s["absorb_threshold"]),
                         bridge_correction=bool(s["bridge_correction"]),
                         substep_threshold=float(s["substep_threshold"]))

    @property
    def x0(self):
        return float(self.raw["sim"]["x0"])

    @property
    def workers(self):
        return int(self.raw["sim"]["workers"])

    @property
    def q(self):
        return float(self.raw["iu"]["q"])

    @property
    def outputs(self):
        return str(self.raw["outputs"])

    def validate(self):
        """Build every component once so that invalid values fail early."""
        self.model.build()
        self.quadrature
        self.grid
        self.sim
        if not self.x0 > 0:
            raise UsageError("sim.x0 must be positive")
        if self.workers < 1:
            raise UsageError("sim.workers must be at least 1")
        return self

    def hashed_part(self):
        doc = copy.deepcopy(self.raw)
        for path in _UNHASHED:
            keys = path.split(".")
            node = doc
            for k in keys[:-1]:
                node = node[k]
            node.pop(keys[-1], None)
        doc["model"]["params"] = self.model.resolved_params()
        return doc

    def metadata(self):
        return {"config_hash": config_hash(self), "seed": int(self.raw["sim"]["seed"]),
                "version": __version__, "rng": "philox4x64-10"}


def config_hash(cfg):
    text = json.dumps(cfg.hashed_part(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def load_config(source=None, overrides=()):
    """Defaults, then the JSON file or dict ``source``, then ``(path, value)`` overrides.

    Raises
    ------
    UsageError
        For unreadable or malformed JSON, unknown keys or invalid values.
    """
    doc = copy.deepcopy(DEFAULT_CONFIG)
    if source is not None:
        if isinstance(source, dict):
            user = source
        else:
            try:
                with open(source) as fh:
                    user = json.load(fh)
            except OSError as exc:
                raise UsageError(f"cannot read config {source}: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise UsageError(f"malformed JSON in {source}: {exc}") from exc
        if not isinstance(user, dict):
            raise UsageError("config must be a JSON object")
        user = copy.deepcopy(user)
        um = user.get("model")
        if isinstance(um, dict) and "name" in um and "params" not in um and um["name"] != doc["model"]["name"]:
            um["params"] = {}
        _merge(doc, user)
    for path, value in overrides:
        apply_override(doc, path, value)
    try:
        return RunConfig(doc).validate()
    except (TypeError, KeyError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
