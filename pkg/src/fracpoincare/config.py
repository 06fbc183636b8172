"""Experiment configuration: TOML schema, defaults and validation.

Schema (every key optional)::

    seed = 0
    out = "out"

    [weight]                   # or simply  weight = "gaussian"
    name = "gaussian"          # "gaussian" | "exp-power:<p>" | "custom:<path.py>"
    dim = 1                    # also accepted as grid.n

    [grid]
    half_width = 8.0           # also accepted as grid.box
    points = 321               # nodes per axis

    [form]
    alpha = [0.5, 1.0, 1.5]
    delta = "chain"            # "chain" (use the fitted c') or a number >= 0
    backend = "tiled"          # "tiled" | "mc"
    mc_samples = 200000

    [chain]
    A = "auto"                 # "auto" or a positive number

    [trials]
    eigen = 8
    indicator = 8
    random = 16
    poly = 0

    [gaffney]
    t = [...]                  # default: 8 log-spaced values in [0.01, 1]
    [[gaffney.pairs]]
    E = [[-2.0, -1.0]]         # one (lo, hi) row per axis
    F = [[1.0, 2.0]]

    [covering]
    theta = [1.1, 1.5, 2.0, 4.0]
    samples = 100

    [cubes]
    t = [0.25, 1.0]
    k_max = 3
    trials = 10

    [monotone]
    trials = 200

    [quadratic]
    trials = 20
    beta = [0.25, 0.5, 0.75]

    [checks]                   # all default to true
    classical = true
    ...
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .measure import weight_from_string
from .operator import MIN_POINTS, NODE_CAP

__all__ = ["CHECKS", "DIAGNOSTIC_CHECKS", "ExperimentConfig", "load_config", "parse_config",
           "validate", "resolve_config_path"]

# run order respects the dependencies measure -> operator -> spectral -> localization/gagliardo -> harness
CHECKS = ("classical", "improved", "quadratic", "monotone", "gaffney", "covering", "cubes",
          "controllalpha", "chain", "fractional", "limit")
DIAGNOSTIC_CHECKS = ("limit",)


def _default_pairs():
    return [{"E": [[-2.0, -1.0]], "F": [[1.0, 2.0]]}]


def _default_t():
    return [float(v) for v in np.geomspace(0.01, 1.0, 8)]


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "out"
    jobs: int = 1
    weight: str = "gaussian"
    dim: int = 1
    half_width: float = 8.0
    points: int = 321
    alpha: list = field(default_factory=lambda: [0.5, 1.0, 1.5])
    delta: object = "chain"
    backend: str = "tiled"
    mc_samples: int = 200_000
    A: object = "auto"
    trials: dict = field(default_factory=lambda: {"eigen": 8, "indicator": 8, "random": 16, "poly": 0})
    gaffney_t: list = field(default_factory=_default_t)
    gaffney_pairs: list = field(default_factory=_default_pairs)
    covering_theta: list = field(default_factory=lambda: [1.1, 1.5, 2.0, 4.0])
    covering_samples: int = 100
    cubes_t: list = field(default_factory=lambda: [0.25, 1.0])
    cubes_k_max: int = 3
    cubes_trials: int = 10
    monotone_trials: int = 200
    quadratic_trials: int = 20
    quadratic_beta: list = field(default_factory=lambda: [0.25, 0.5, 0.75])
    checks: dict = field(default_factory=lambda: {c: True for c in CHECKS})

    @property
    def enabled(self):
        return [c for c in CHECKS if self.checks.get(c, False)]

    def to_dict(self):
        return asdict(self)

    def digest(self):
        """sha256 of the canonical JSON form, excluding output location and worker count."""
        d = self.to_dict()
        d.pop("out")
        d.pop("jobs")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


# TOML path -> attribute name
_FIELDS = {
    ("seed",): "seed", ("out",): "out", ("jobs",): "jobs",
    ("weight", "name"): "weight", ("weight", "dim"): "dim",
    ("grid", "half_width"): "half_width", ("grid", "points"): "points",
    ("grid", "n"): "dim", ("grid", "box"): "half_width",
    ("form", "alpha"): "alpha", ("form", "delta"): "delta", ("form", "backend"): "backend",
    ("form", "mc_samples"): "mc_samples",
    ("chain", "A"): "A",
    ("gaffney", "t"): "gaffney_t", ("gaffney", "pairs"): "gaffney_pairs",
    ("covering", "theta"): "covering_theta", ("covering", "samples"): "covering_samples",
    ("cubes", "t"): "cubes_t", ("cubes", "k_max"): "cubes_k_max", ("cubes", "trials"): "cubes_trials",
    ("monotone", "trials"): "monotone_trials",
    ("quadratic", "trials"): "quadratic_trials", ("quadratic", "beta"): "quadratic_beta",
}
_SECTIONS = {"weight", "grid", "form", "chain", "gaffney", "covering", "cubes", "monotone",
             "quadratic", "trials", "checks"}


def parse_config(data):
    """Build a config from a parsed TOML mapping; unknown keys raise ConfigError."""
    cfg = ExperimentConfig()
    errors = []
    for key, value in data.items():
        if key == "weight" and isinstance(value, str):
            cfg.weight = value
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                errors.append(f"{key}: expected a table")
                continue
            for sub, v in value.items():
                if key == "trials":
                    if sub not in cfg.trials:
                        errors.append(f"trials.{sub}: unknown key")
                    else:
                        cfg.trials[sub] = v
                elif key == "checks":
                    if sub not in CHECKS:
                        errors.append(f"checks.{sub}: unknown check (known: {', '.join(CHECKS)})")
                    else:
                        cfg.checks[sub] = v
                elif (key, sub) in _FIELDS:
                    setattr(cfg, _FIELDS[(key, sub)], v)
                else:
                    errors.append(f"{key}.{sub}: unknown key")
        elif (key,) in _FIELDS:
            setattr(cfg, _FIELDS[(key,)], value)
        else:
            errors.append(f"{key}: unknown key")
    if isinstance(cfg.alpha, (int, float)):
        cfg.alpha = [cfg.alpha]
    if errors:
        raise ConfigError(errors)
    return cfg


def resolve_config_path(name):
    """A filesystem path, or the name of a bundled config (e.g. "examples/gaussian-1d")."""
    p = Path(name)
    if p.is_file():
        return p
    if p.with_suffix(".toml").is_file():
        return p.with_suffix(".toml")
    bundled = resources.files("fracpoincare") / "configs" / (p.stem + ".toml")
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError([f"config: no file or bundled config named {name!r}"])


def load_config(name):
    path = resolve_config_path(name)
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return parse_config(data)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _box(spec, dim):
    b = np.asarray(spec, dtype=float)
    if b.shape == (2,) and dim == 1:
        b = b[None, :]
    if b.shape != (dim, 2) or np.any(b[:, 0] > b[:, 1]):
        return None
    return b


def validate(cfg):
    """List every violated rule as "field.path: message"; empty means valid."""
    errs = []
    if not (isinstance(cfg.seed, int) and not isinstance(cfg.seed, bool) and 0 <= cfg.seed < 2 ** 64):
        errs.append("seed: must be an integer in [0, 2^64)")
    if not (isinstance(cfg.jobs, int) and cfg.jobs >= 1):
        errs.append("jobs: must be a positive integer")
    if cfg.dim not in (1, 2):
        errs.append("weight.dim: must be 1 or 2")
    else:
        try:
            weight_from_string(cfg.weight, cfg.dim)
        except Exception as exc:  # any failure to build the weight is a config error
            errs.append(f"weight.name: {exc}")
    if not (_is_num(cfg.half_width) and cfg.half_width > 0):
        errs.append("grid.half_width: must be positive")
    if not (isinstance(cfg.points, int) and cfg.points >= MIN_POINTS):
        errs.append(f"grid.points: must be an integer >= {MIN_POINTS}")
    elif cfg.dim in (1, 2) and cfg.points ** cfg.dim > NODE_CAP:
        suggest = int(math.floor(NODE_CAP ** (1.0 / cfg.dim)))
        errs.append(f"grid.points: {cfg.points}^{cfg.dim} nodes exceeds the cap {NODE_CAP}; "
                    f"use points <= {suggest}")
    alphas = cfg.alpha if isinstance(cfg.alpha, list) else [cfg.alpha]
    if not alphas:
        errs.append("form.alpha: empty list")
    for a in alphas:
        if not (_is_num(a) and 0 < a < 2):
            errs.append(f"form.alpha: {a!r} not in (0, 2)")
    if not (cfg.delta == "chain" or (_is_num(cfg.delta) and cfg.delta >= 0)):
        errs.append("form.delta: must be \"chain\" or a number >= 0")
    if cfg.backend not in ("tiled", "mc"):
        errs.append("form.backend: must be \"tiled\" or \"mc\"")
    if not (isinstance(cfg.mc_samples, int) and cfg.mc_samples >= 32):
        errs.append("form.mc_samples: must be an integer >= 32")
    if not (cfg.A == "auto" or (_is_num(cfg.A) and cfg.A > 0)):
        errs.append("chain.A: must be \"auto\" or a positive number")
    for k, v in cfg.trials.items():
        if not (isinstance(v, int) and v >= 0):
            errs.append(f"trials.{k}: must be a nonnegative integer")
    if all(isinstance(v, int) for v in cfg.trials.values()) and sum(cfg.trials.values()) == 0:
        errs.append("trials: trial set would be empty")
    ts = cfg.gaffney_t
    if not (isinstance(ts, list) and len(ts) >= 4 and all(_is_num(t) and t > 0 for t in ts)):
        errs.append("gaffney.t: need at least 4 positive values")
    if not isinstance(cfg.gaffney_pairs, list) or not cfg.gaffney_pairs:
        errs.append("gaffney.pairs: need at least one pair")
    else:
        for i, pair in enumerate(cfg.gaffney_pairs):
            if not isinstance(pair, dict) or set(pair) != {"E", "F"}:
                errs.append(f"gaffney.pairs[{i}]: needs exactly the keys E and F")
                continue
            E, F = _box(pair["E"], cfg.dim), _box(pair["F"], cfg.dim)
            if E is None or F is None:
                errs.append(f"gaffney.pairs[{i}]: boxes must be {cfg.dim} (lo, hi) rows with lo <= hi")
                continue
            gap = np.maximum(0.0, np.maximum(F[:, 0] - E[:, 1], E[:, 0] - F[:, 1]))
            if np.linalg.norm(gap) <= 0:
                errs.append(f"gaffney.pairs[{i}]: E and F overlap or touch")
            if _is_num(cfg.half_width) and (np.any(np.abs(E) > cfg.half_width)
                                            or np.any(np.abs(F) > cfg.half_width)):
                errs.append(f"gaffney.pairs[{i}]: boxes leave the grid")
    th = cfg.covering_theta
    if not (isinstance(th, list) and th and all(_is_num(v) and v > 1 for v in th)):
        errs.append("covering.theta: values must exceed 1")
    if not (isinstance(cfg.covering_samples, int) and cfg.covering_samples >= 1):
        errs.append("covering.samples: must be a positive integer")
    if not (isinstance(cfg.cubes_k_max, int) and cfg.cubes_k_max >= 0):
        errs.append("cubes.k_max: must be a nonnegative integer")
    ct = cfg.cubes_t
    if not (isinstance(ct, list) and ct and all(_is_num(t) and t > 0 for t in ct)):
        errs.append("cubes.t: need positive values")
    elif isinstance(cfg.cubes_k_max, int) and _is_num(cfg.half_width):
        for t in ct:
            if 2 ** (cfg.cubes_k_max + 1) * math.sqrt(t) > 2 * cfg.half_width + 1e-12:
                errs.append(f"cubes.t: 2^(k_max+1) sqrt({t}) exceeds the domain width")
    for name in ("cubes_trials", "monotone_trials", "quadratic_trials"):
        v = getattr(cfg, name)
        if not (isinstance(v, int) and v >= 1):
            errs.append(f"{name.replace('_', '.', 1)}: must be a positive integer")
    qb = cfg.quadratic_beta
    if not (isinstance(qb, list) and all(_is_num(b) and 0 < b < 1 for b in qb)):
        errs.append("quadratic.beta: values must lie in (0, 1)")
    for c, v in cfg.checks.items():
        if c not in CHECKS:
            errs.append(f"checks.{c}: unknown check")
        elif not isinstance(v, bool):
            errs.append(f"checks.{c}: must be true or false")
    return errs


def with_overrides(cfg, **kw):
    """Copy of cfg with non-None keyword values replaced."""
    out = copy.deepcopy(cfg)
    for k, v in kw.items():
        if v is not None:
            setattr(out, k, v)
    return out
