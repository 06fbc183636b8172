"""Off-diagonal resolvent decay, lattice covering counts and dyadic cube oscillations."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InsufficientSignalError
from .operator import resolvent_apply

__all__ = [
    "RegionPair",
    "GaffneyRatio",
    "DecayFit",
    "CubeFamily",
    "CubeRecord",
    "region_pair",
    "gaffney_ratio",
    "fit_decay",
    "covering_count",
    "covering_constant",
    "cube_family",
    "tile_norms",
    "cube_oscillations",
    "annulus_decay_weights",
    "write_gaffney_csv",
    "write_cubes_csv",
]

GAFFNEY_PREFACTOR = 8.0
SIGNAL_FLOOR = 1e-14


def _as_box(box, dim):
    b = np.asarray(box, dtype=float)
    if b.shape == (2,) and dim == 1:
        b = b[None, :]
    if b.shape != (dim, 2):
        raise DomainError(f"box must be {dim} (lo, hi) pairs")
    if np.any(b[:, 0] > b[:, 1]):
        raise DomainError("box has lo > hi")
    return b


def _in_box(nodes, box, tol):
    return np.all((nodes >= box[:, 0] - tol) & (nodes <= box[:, 1] + tol), axis=1)


@dataclass
class RegionPair:
    E: np.ndarray  # (dim, 2)
    F: np.ndarray
    E_mask: np.ndarray
    F_mask: np.ndarray
    d: float


def region_pair(grid, E, F):
    """Closed boxes E and F restricted to the grid; they must be a positive distance apart."""
    E = _as_box(E, grid.dim)
    F = _as_box(F, grid.dim)
    gap = np.maximum(0.0, np.maximum(F[:, 0] - E[:, 1], E[:, 0] - F[:, 1]))
    d = float(np.linalg.norm(gap))
    if d <= 0:
        raise DomainError(f"regions {E.tolist()} and {F.tolist()} overlap or touch")
    tol = 1e-9 * grid.h
    em = _in_box(grid.nodes, E, tol)
    fm = _in_box(grid.nodes, F, tol)
    if not em.any() or not fm.any():
        raise DomainError("a region contains no grid node")
    return RegionPair(E, F, em, fm, d)


@dataclass
class GaffneyRatio:
    t: float
    x: float  # d / sqrt(t)
    r_res: float
    r_tL: float


def _restricted_norm(op, v, mask):
    return math.sqrt(float(np.sum(v[mask] ** 2 * op.masses[mask])))


def gaffney_ratio(op, pair, t, f=None):
    """||(I+tL)^{-1} f||_{L2(F)} / ||f||_{L2(E)} and the same for t L (I+tL)^{-1} f."""
    if not t > 0:
        raise ValueError("t must be positive")
    f = pair.E_mask.astype(float) if f is None else np.asarray(f, dtype=float)
    if np.any(f[~pair.E_mask] != 0):
        raise DomainError("f must vanish outside E")
    nf = _restricted_norm(op, f, pair.E_mask)
    if nf == 0:
        raise DomainError("f vanishes identically")
    u = resolvent_apply(op, t, f)
    tlu = t * op.matvec(u)
    return GaffneyRatio(float(t), pair.d / math.sqrt(t),
                        _restricted_norm(op, u, pair.F_mask) / nf,
                        _restricted_norm(op, tlu, pair.F_mask) / nf)


@dataclass
class DecayFit:
    c1: float  # certified rate: ratios <= 8 exp(-c1 d/sqrt(t)) over the sweep
    c1_fit: float  # minus the least-squares slope of log r_res against d/sqrt(t)
    intercept: float
    r2: float
    envelope_res: float  # max r_res exp(c1 x); <= 8
    envelope_tL: float
    ratios: list = field(default_factory=list)

    @property
    def prefactor(self):
        return math.exp(self.intercept)


def fit_decay(op, pair, ts, f=None):
    """Fit log r_res = intercept - c1 x, x = d/sqrt(t), then shrink c1 to the 8-envelope."""
    ratios = [gaffney_ratio(op, pair, t, f) for t in ts]
    usable = [r for r in ratios if r.r_res > SIGNAL_FLOOR]
    if len(usable) < 4:
        raise InsufficientSignalError(
            f"only {len(usable)} of {len(ratios)} ratios exceed {SIGNAL_FLOOR:g}; "
            "use larger t or closer regions")
    x = np.array([r.x for r in usable])
    y = np.log([r.r_res for r in usable])
    slope, intercept = np.polyfit(x, y, 1)
    pred = intercept + slope * x
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    c1_fit = -float(slope)
    if c1_fit <= 0:
        raise InsufficientSignalError(f"ratios do not decay with d/sqrt(t) (slope {slope:.3g})")
    # largest rate compatible with r <= 8 exp(-c x) at every sweep point
    limits = []
    for r in ratios:
        for val in (r.r_res, r.r_tL):
            if val > 0:
                limits.append((math.log(GAFFNEY_PREFACTOR) - math.log(val)) / r.x)
    c1 = min([c1_fit] + limits)
    env_res = max(r.r_res * math.exp(c1 * r.x) for r in ratios)
    env_tl = max(r.r_tL * math.exp(c1 * r.x) for r in ratios)
    return DecayFit(c1, c1_fit, float(intercept), r2, env_res, env_tl, ratios)


def covering_constant(dim):
    """(3 sqrt(n))^n, from packing unit cubes into a ball of radius (theta + 1/2) sqrt(n)."""
    return (3.0 * math.sqrt(dim)) ** dim


def covering_count(t, theta, x, anchor=None, box=None):
    """#{j : |x - x_j| <= theta sqrt(t)} for centers x_j = anchor + sqrt(t) Z^n."""
    if not theta > 1:
        raise ValueError("theta must exceed 1")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dim = x.size
    anchor = np.zeros(dim) if anchor is None else np.atleast_1d(np.asarray(anchor, dtype=float))
    s = math.sqrt(t)
    rad = theta * s
    rel = (x - anchor) / s
    ranges = [range(int(math.floor(r - theta)) - 1, int(math.ceil(r + theta)) + 2) for r in rel]
    count = 0
    for j in itertools.product(*ranges):
        c = anchor + s * np.array(j, dtype=float)
        if box is not None and np.any(np.abs(c) > box):
            continue
        if np.linalg.norm(x - c) <= rad:
            count += 1
    return count


@dataclass
class CubeFamily:
    t: float
    side: float
    corner: float
    centers: np.ndarray  # (J, dim)
    tile_of_node: np.ndarray  # index into centers for each grid node
    grid: object

    @property
    def count(self):
        return len(self.centers)


def cube_family(grid, t):
    """Tiles Q(x_j, sqrt(t)) anchored at the lower domain corner; half-open so each node has one tile."""
    if not t > 0:
        raise ValueError("t must be positive")
    s = math.sqrt(t)
    corner = -grid.half_width
    idx = np.floor((grid.nodes - corner) / s + 1e-9).astype(int)
    keys, inverse = np.unique(idx, axis=0, return_inverse=True)
    centers = corner + (keys + 0.5) * s
    return CubeFamily(t, s, corner, centers, inverse.ravel(), grid)


def tile_norms(family, op, v):
    """Per-tile ||v||^2_{L2(Q_j, M)}; they sum to ||v||_M^2."""
    contrib = np.asarray(v, dtype=float) ** 2 * op.masses
    return np.bincount(family.tile_of_node, weights=contrib, minlength=family.count)


@dataclass
class CubeRecord:
    j: int
    k: int
    lhs: float  # ||g_k||^2 on the annulus C_k
    rhs: float  # (1 / (2^k sqrt t)^n) * double integral over Q(x_j, 2^{k+1} sqrt t)
    cbar: float  # Cauchy-Schwarz constant for this (j, k)
    truncated: bool

    @property
    def ratio(self):
        bound = self.cbar * self.rhs
        return self.lhs / bound if bound > 0 else (0.0 if self.lhs == 0 else math.inf)


def _cube_mask(nodes, center, half, tol):
    return np.all(np.abs(nodes - center) <= half + tol, axis=1)


def cube_oscillations(family, op, f, k_max):
    """Mean-oscillation bounds on dyadic annuli around each tile.

    For every tile j and level k the record holds
    lhs = sum_{C_k} |f - m_j|^2 m_i with m_j the Lebesgue mean of f on
    Q(x_j, 2 sqrt t), and rhs = (2^k sqrt t)^{-n} sum_{x,y in Q} |f_x - f_y|^2 M_x h^{2n}
    over Q = Q(x_j, 2^{k+1} sqrt t). Cauchy-Schwarz on the grid gives
    lhs <= cbar * rhs with cbar = (2^k sqrt t)^n / |Q(x_j, 2 sqrt t)|_grid.
    """
    grid = family.grid
    width = 2 * grid.half_width
    if 2 ** (k_max + 1) * family.side > width + 1e-12:
        raise ValueError(f"2^(k_max+1) sqrt(t) = {2 ** (k_max + 1) * family.side} exceeds domain width {width}")
    f = np.asarray(f, dtype=float)
    nodes = grid.nodes
    hn = grid.h ** grid.dim
    n = grid.dim
    tol = 1e-9 * grid.h
    s = family.side
    records = []
    for j, c in enumerate(family.centers):
        q0 = _cube_mask(nodes, c, s, tol)
        n0 = int(q0.sum())
        # shift by a node value so that constant data gives exact zeros
        ref = f[q0][0]
        mean = float(np.mean(f[q0] - ref))
        inner = q0
        for k in range(k_max + 1):
            half = 2 ** k * s
            big = q0 if k == 0 else _cube_mask(nodes, c, half, tol)
            ann = big if k == 0 else big & ~inner
            lhs = float(np.sum((f[ann] - ref - mean) ** 2 * op.masses[ann]))
            fq = f[big] - ref
            g = fq - fq.mean()
            nq = g.size
            # sum_y (f_x - f_y)^2 = nq g_x^2 + sum g^2 since g is centred
            pair_sum = nq * g ** 2 + np.sum(g ** 2)
            integral = float(np.sum(op.masses[big] * pair_sum)) * hn
            scale = (2 ** k * s) ** n
            truncated = bool(np.any(np.abs(c) + half > grid.half_width + tol))
            records.append(CubeRecord(j, k, lhs, integral / scale, scale / (n0 * hn), truncated))
            inner = big
    return records


def annulus_decay_weights(c1, k_max):
    """exp(-c 2^k) with c = 2 c1 for k >= 1 and weight 1 at k = 0."""
    c = 2.0 * c1
    return np.array([1.0] + [math.exp(-c * 2 ** k) for k in range(1, k_max + 1)])


def write_gaffney_csv(fits, path):
    """Plot-ready rows (log r_res against d/sqrt t) for one fit or a {label: fit} mapping."""
    if isinstance(fits, DecayFit):
        fits = {"pair0": fits}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair", "t", "d_over_sqrt_t", "r_res", "r_tL", "log_r_res", "envelope"])
        for label, fit in fits.items():
            for r in fit.ratios:
                env = GAFFNEY_PREFACTOR * math.exp(-fit.c1 * r.x)
                logr = math.log(r.r_res) if r.r_res > 0 else float("-inf")
                w.writerow([label, repr(r.t), repr(r.x), repr(r.r_res), repr(r.r_tL), repr(logr), repr(env)])


def write_cubes_csv(groups, path):
    """groups: sequence of (meta, records) where every meta dict has the same keys."""
    groups = list(groups)
    keys = list(groups[0][0]) if groups else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys + ["j", "k", "lhs", "bound", "ratio", "truncated"])
        for meta, records in groups:
            head = [meta[key] for key in keys]
            for rec in records:
                w.writerow(head + [rec.j, rec.k, repr(rec.lhs), repr(rec.cbar * rec.rhs),
                                   repr(rec.ratio), int(rec.truncated)])
