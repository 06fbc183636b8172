"""Weight families M = exp(-V), their derivatives and admissibility checks.

Every evaluator is vectorised: points are arrays of shape ``(..., n)`` and
``V``/``lap_V`` return shape ``(...)`` while ``grad_V`` returns ``(..., n)``.
"""

from __future__ import annotations

import importlib.util
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .errors import DomainError, InvalidWeightError, TruncationError

__all__ = [
    "WeightSpec",
    "WeightEval",
    "ConditionReport",
    "NormalizationResult",
    "gaussian",
    "exp_power",
    "custom",
    "weight_from_string",
    "evaluate_weight",
    "check_assumptionV",
    "check_alpha_condition",
    "normalization_constant",
    "suggest_box",
]

# ratio of boundary weight to peak weight tolerated by the quadrature
BOUNDARY_MASS_TOL = 1e-10


@dataclass(frozen=True)
class WeightSpec:
    family: str
    dim: int
    V: Callable = field(repr=False)
    grad_V: Callable = field(repr=False)
    lap_V: Callable = field(repr=False)
    exponent: float | None = None
    label: str = ""

    def __post_init__(self):
        if self.family not in ("gaussian", "exp_power", "custom"):
            raise ValueError(f"unknown weight family {self.family!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dimension must be a positive integer")
        if self.family == "exp_power" and (self.exponent is None or self.exponent < 1):
            raise ValueError("exp_power needs an exponent p >= 1")

    @property
    def name(self):
        if self.label:
            return self.label
        if self.family == "exp_power":
            return f"exp-power:{self.exponent:g}"
        return self.family

    @property
    def is_even(self):
        """True when V(-x) = V(x) is known analytically."""
        return self.family in ("gaussian", "exp_power")

    @cached_property
    def Z(self):
        """Normalization constant on a box large enough to hold the mass."""
        return normalization_constant(self, suggest_box(self)).value


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        if dim == 1:
            x = x[..., None]
        else:
            raise ValueError(f"points must have trailing dimension {dim}")
    return x


def gaussian(dim=1):
    """V(x) = |x|^2 / 2."""

    def V(x):
        x = _as_points(x, dim)
        return 0.5 * np.sum(x * x, axis=-1)

    def grad_V(x):
        return _as_points(x, dim).copy()

    def lap_V(x):
        x = _as_points(x, dim)
        return np.full(x.shape[:-1], float(dim))

    return WeightSpec("gaussian", dim, V, grad_V, lap_V)


def exp_power(p, dim=1):
    """V(x) = |x|^p for p >= 1.

    For p < 2 the Laplacian is singular at the origin. There ``grad_V`` is
    0 and ``lap_V`` returns the limit along rays (0 when p(p+n-2) = 0,
    2n for p = 2, +inf otherwise).
    """
    p = float(p)
    coef = p * (p + dim - 2)

    def V(x):
        x = _as_points(x, dim)
        return np.linalg.norm(x, axis=-1) ** p

    def grad_V(x):
        x = _as_points(x, dim)
        r = np.linalg.norm(x, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(r > 0, p * r ** (p - 2), 0.0)
        return s[..., None] * x

    def lap_V(x):
        x = _as_points(x, dim)
        r = np.linalg.norm(x, axis=-1)
        if coef == 0:
            return np.zeros_like(r)
        if p == 2:
            return np.full_like(r, coef)
        at_zero = 0.0 if p > 2 else np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0, coef * r ** (p - 2), at_zero)

    return WeightSpec("exp_power", dim, V, grad_V, lap_V, exponent=p)


def custom(V, grad_V, lap_V, dim=1, label="custom"):
    """Wrap user evaluators; they must accept arrays of shape (..., dim)."""

    def wrap(fn, vector):
        def evaluator(x):
            x = _as_points(x, dim)
            out = np.asarray(fn(x), dtype=float)
            target = x.shape if vector else x.shape[:-1]
            return np.broadcast_to(out, target).copy()

        return evaluator

    return WeightSpec("custom", dim, wrap(V, False), wrap(grad_V, True),
                      wrap(lap_V, False), label=label)


def _load_custom(path, dim):
    path = Path(path)
    spec = importlib.util.spec_from_file_location(f"_fracpoincare_weight_{path.stem}", path)
    if spec is None or spec.loader is None:
        raise InvalidWeightError(f"cannot load custom weight from {path}")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    missing = [k for k in ("V", "grad_V", "lap_V") if not hasattr(mod, k)]
    if missing:
        raise InvalidWeightError(f"{path} does not define {', '.join(missing)}")
    dim = int(getattr(mod, "DIM", dim))
    return custom(mod.V, mod.grad_V, mod.lap_V, dim=dim, label=f"custom:{path}")


def weight_from_string(text, dim=1):
    """Parse ``gaussian``, ``exp-power:p`` or ``custom:<path>``."""
    text = text.strip()
    if text == "gaussian":
        return gaussian(dim)
    if text.startswith("exp-power:"):
        return exp_power(float(text.split(":", 1)[1]), dim)
    if text.startswith("custom:"):
        return _load_custom(text.split(":", 1)[1], dim)
    raise ValueError(f"unrecognised weight {text!r}")


class WeightEval(NamedTuple):
    M: np.ndarray
    grad_log_M: np.ndarray
    lap_log_M: np.ndarray
    underflow: np.ndarray


def evaluate_weight(spec, x):
    """Return M(x), grad ln M(x), lap ln M(x) (unnormalized) and an underflow flag."""
    x = _as_points(x, spec.dim)
    if not np.all(np.isfinite(x)):
        raise DomainError("evaluation point must be finite")
    v = np.asarray(spec.V(x), dtype=float)
    g = np.asarray(spec.grad_V(x), dtype=float)
    lap = np.asarray(spec.lap_V(x), dtype=float)
    if np.isnan(v).any() or np.isnan(g).any() or np.isnan(lap).any():
        raise InvalidWeightError(f"weight {spec.name} produced NaN")
    with np.errstate(over="ignore", under="ignore"):
        M = np.exp(-v)
    underflow = (M == 0.0) & np.isfinite(v)
    return WeightEval(M, -g, -lap, underflow)


@dataclass
class ConditionReport:
    condition_id: str
    parameters: dict
    satisfied: bool
    margin_profile: list  # (radius, min of tested expression on that sphere)


def _sphere_directions(dim, count):
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        ang = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    rng = np.random.default_rng(12345)
    d = rng.standard_normal((count, dim))
    axes = np.concatenate([np.eye(dim), -np.eye(dim)])
    d = np.concatenate([axes, d])
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _sphere_min(spec, radii, expr, n_dirs):
    dirs = _sphere_directions(spec.dim, n_dirs)
    profile = []
    for r in radii:
        pts = r * dirs
        vals = expr(pts)
        if np.isnan(vals).any():
            raise InvalidWeightError(f"weight {spec.name} produced NaN at radius {r}")
        profile.append((float(r), float(np.min(vals))))
    return profile


def check_assumptionV(spec, a, c, R, box=None, n_radii=64, n_dirs=64):
    """Sample a |grad V|^2 - lap V >= c on spheres R <= |x| <= box."""
    if not 0 < a < 1:
        raise ValueError("a must lie in (0, 1)")
    if c <= 0 or R <= 0:
        raise ValueError("c and R must be positive")
    box = 4.0 * R if box is None else float(box)
    if box < R:
        raise DomainError(f"sampling box {box} is smaller than R = {R}")

    def expr(pts):
        g = spec.grad_V(pts)
        return a * np.sum(g * g, axis=-1) - spec.lap_V(pts)

    radii = np.linspace(R, box, n_radii) if box > R else np.array([R])
    profile = _sphere_min(spec, radii, expr, n_dirs)
    ok = all(m >= c for _, m in profile)
    return ConditionReport("assumptionV", {"a": a, "c": c, "R": R, "box": box}, ok, profile)


def check_alpha_condition(spec, eps, radii=None, n_dirs=64, factor=2.0, offset=1.0):
    """Divergence proxy for (1 - eps)|grad V|^2 / 2 - lap V -> +inf.

    Satisfied when the sphere-minimum profile increases over the last three
    radii and the final margin exceeds ``factor * first + offset``.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    radii = np.arange(1.0, 9.0) if radii is None else np.asarray(radii, dtype=float)
    if radii.size == 0:
        raise ValueError("radii must be nonempty")
    if np.any(np.diff(radii) <= 0) or radii[0] <= 0:
        raise ValueError("radii must be positive and strictly increasing")

    def expr(pts):
        g = spec.grad_V(pts)
        return 0.5 * (1 - eps) * np.sum(g * g, axis=-1) - spec.lap_V(pts)

    profile = _sphere_min(spec, radii, expr, n_dirs)
    m = [v for _, v in profile]
    ok = False
    if len(m) >= 3:
        rising = m[-3] < m[-2] < m[-1]
        ok = bool(rising and m[-1] > factor * m[0] + offset)
    params = {"eps": eps, "factor": factor, "offset": offset}
    return ConditionReport("alpha_condition", params, ok, profile)


@dataclass
class NormalizationResult:
    value: float
    rel_error: float
    box: float
    order: int


def _boundary_ratio(spec, box, samples=None):
    """Largest exp(-(V_boundary - V_min)) over the cube boundary."""
    if samples is None:
        samples = 257 if spec.dim <= 2 else 17
    line = np.linspace(-box, box, samples)
    if spec.dim == 1:
        bnd = np.array([[-box], [box]])
    else:
        faces = []
        grids = np.meshgrid(*([line] * (spec.dim - 1)), indexing="ij")
        rest = np.stack([g.ravel() for g in grids], axis=-1)
        for axis in range(spec.dim):
            for side in (-box, box):
                pts = np.insert(rest, axis, side, axis=1)
                faces.append(pts)
        bnd = np.concatenate(faces)
    interior = np.stack(np.meshgrid(*([line] * spec.dim), indexing="ij"), axis=-1)
    interior = interior.reshape(-1, spec.dim)
    vmin = min(float(np.min(spec.V(interior))), float(spec.V(np.zeros(spec.dim))))
    vb = float(np.min(spec.V(bnd)))
    return math.exp(-(vb - vmin))


def suggest_box(spec, tol=BOUNDARY_MASS_TOL, start=1.0, limit=1e4):
    """Smallest doubling of ``start`` whose boundary weight ratio is below ``tol``."""
    box = start
    while box <= limit:
        if _boundary_ratio(spec, box) < tol:
            return box
        box *= 2.0
    raise TruncationError(f"no box up to {limit} confines the mass of {spec.name}")


def _composite_gauss(box, order, panels_per_side):
    # panel edges include 0 so a kink of V at the origin sits on an edge
    edges = np.linspace(-box, box, 2 * panels_per_side + 1)
    t, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _tensor_quad(spec, box, order, panels_per_side):
    x, w = _composite_gauss(box, order, panels_per_side)
    if spec.dim == 1:
        v = spec.V(x[:, None])
        return float(np.sum(w * np.exp(-v)))
    grids = np.meshgrid(*([x] * spec.dim), indexing="ij")
    pts = np.stack(grids, axis=-1)
    wt = w
    for _ in range(spec.dim - 1):
        wt = np.multiply.outer(wt, w)
    v = spec.V(pts)
    return float(np.sum(wt * np.exp(-v)))


def normalization_constant(spec, box, order=32, panels_per_side=8):
    """Integral of exp(-V) over [-box, box]^n by composite Gauss-Legendre.

    The error estimate is the relative change against half the order.
    """
    box = float(box)
    ratio = _boundary_ratio(spec, box)
    if ratio >= BOUNDARY_MASS_TOL:
        suggestion = suggest_box(spec, start=box)
        raise TruncationError(
            f"boundary weight ratio {ratio:.3e} on box {box} exceeds "
            f"{BOUNDARY_MASS_TOL:g}; try box >= {suggestion}",
            suggested_box=suggestion,
        )
    z = _tensor_quad(spec, box, order, panels_per_side)
    z_half = _tensor_quad(spec, box, max(order // 2, 2), panels_per_side)
    if not (z > 0 and np.isfinite(z)):
        raise InvalidWeightError(f"normalization of {spec.name} is not positive and finite")
    return NormalizationResult(z, abs(z - z_half) / z, box, order)
