"""Finite-volume discretization of L f = -M^{-1} div(M grad f) on a box.

The scheme is the nearest-neighbour weighted graph Laplacian

    (L f)_i = h^{n-2} / m_i * sum_{j ~ i} M_{ij} (f_i - f_j),

with node masses ``m_i = M(x_i) h^n`` and edge weights ``M_{ij}`` equal to the
weight at the edge midpoint. There are no edges leaving the box (zero flux),
so constants span the kernel and ``<L f, g>_M`` equals the discrete Dirichlet
form ``h^{n-2} sum_edges M_e (f_i - f_j)(g_i - g_j)``.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, SolverError, TruncationError

__all__ = [
    "Grid",
    "WeightedOperator",
    "build_operator",
    "m_inner_product",
    "m_norm",
    "project_mean_zero",
    "resolvent_apply",
    "write_triplets",
    "read_triplets",
    "NODE_CAP",
]

NODE_CAP = 100_000
MIN_POINTS = 16
# boundary node weight relative to the peak node weight
TRUNCATION_TOL = 1e-8
RESOLVENT_RTOL = 1e-10


@dataclass(frozen=True)
class Grid:
    dim: int
    half_width: float
    points: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise DomainError("grid dimension must be 1 or 2")
        if self.points < MIN_POINTS:
            raise DomainError(f"need at least {MIN_POINTS} points per axis")
        if not self.half_width > 0:
            raise DomainError("half_width must be positive")
        if self.points ** self.dim > NODE_CAP:
            suggested = int(NODE_CAP ** (1.0 / self.dim))
            raise DomainError(
                f"{self.points}^{self.dim} nodes exceed the cap {NODE_CAP}; "
                f"use points <= {suggested}")

    @property
    def h(self):
        return 2.0 * self.half_width / (self.points - 1)

    @property
    def size(self):
        return self.points ** self.dim

    @property
    def shape(self):
        return (self.points,) * self.dim

    @cached_property
    def axis(self):
        return np.linspace(-self.half_width, self.half_width, self.points)

    @cached_property
    def nodes(self):
        """Node coordinates, shape (size, dim), lexicographic with the last axis fastest."""
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def boundary_mask(self):
        idx = np.indices(self.shape).reshape(self.dim, -1)
        return np.any((idx == 0) | (idx == self.points - 1), axis=0)

    def edges(self):
        """Nearest-neighbour edges as (i, j, axis) index arrays with j = i + stride."""
        idx = np.arange(self.size).reshape(self.shape)
        heads, tails, axes = [], [], []
        for a in range(self.dim):
            lo = [slice(None)] * self.dim
            hi = [slice(None)] * self.dim
            lo[a] = slice(0, -1)
            hi[a] = slice(1, None)
            heads.append(idx[tuple(lo)].ravel())
            tails.append(idx[tuple(hi)].ravel())
            axes.append(np.full(heads[-1].size, a))
        return np.concatenate(heads), np.concatenate(tails), np.concatenate(axes)


@dataclass(eq=False)
class WeightedOperator:
    spec: object
    grid: Grid
    weights: np.ndarray  # normalized M at nodes
    masses: np.ndarray  # M_i h^n, summing to one
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_weights: np.ndarray  # normalized M at edge midpoints
    grad_log_M: np.ndarray  # (size, dim)
    _cache: OrderedDict = field(default_factory=OrderedDict, repr=False)

    @property
    def size(self):
        return self.grid.size

    @property
    def dim(self):
        return self.grid.dim

    @cached_property
    def incidence(self):
        E = self.edge_i.size
        rows = np.repeat(np.arange(E), 2)
        cols = np.stack([self.edge_i, self.edge_j], axis=1).ravel()
        vals = np.tile([1.0, -1.0], E)
        return sp.csr_matrix((vals, (rows, cols)), shape=(E, self.size))

    @cached_property
    def _scale(self):
        h = self.grid.h
        return h ** (self.dim - 2)

    @cached_property
    def stiffness(self):
        """Symmetric positive semidefinite K with <Lf, g>_M = g^T K f."""
        B = self.incidence
        W = sp.diags(self._scale * self.edge_weights)
        return (B.T @ W @ B).tocsr()

    @cached_property
    def symmetrized(self):
        """D^{-1/2} K D^{-1/2}; similar to L and symmetric in the Euclidean product."""
        s = 1.0 / np.sqrt(self.masses)
        return (sp.diags(s) @ self.stiffness @ sp.diags(s)).tocsr()

    @cached_property
    def matrix(self):
        """L = D^{-1} K as a sparse matrix."""
        return (sp.diags(1.0 / self.masses) @ self.stiffness).tocsr()

    def matvec(self, f):
        """Apply L to a node vector or to the columns of a (size, k) array.

        Uses edge differences, so constants map to exactly zero.
        """
        f = np.asarray(f, dtype=float)
        d = self.incidence @ f
        w = self._scale * self.edge_weights
        flux = w * d if d.ndim == 1 else w[:, None] * d
        out = self.incidence.T @ flux
        return out / self.masses if out.ndim == 1 else out / self.masses[:, None]

    def dirichlet_form(self, f, g=None):
        """h^{n-2} sum_edges M_e (f_i - f_j)(g_i - g_j)."""
        df = self.incidence @ np.asarray(f, dtype=float)
        dg = df if g is None else self.incidence @ np.asarray(g, dtype=float)
        w = self._scale * self.edge_weights
        if df.ndim == 1:
            return float(np.sum(w * df * dg))
        return np.sum(w[:, None] * df * dg, axis=0)

    @cached_property
    def spectral_bounds(self):
        """(gap estimate, Gershgorin upper bound) of L."""
        upper = 2.0 * float(np.max(self.matrix.diagonal()))
        S = self.symmetrized
        try:
            vals = spla.eigsh(S, k=2, sigma=-1.0, which="LM",
                              v0=np.sqrt(self.masses), return_eigenvectors=False)
            gap = float(np.max(vals))
        except Exception:  # pragma: no cover - eigsh fallback
            vals = np.linalg.eigvalsh(S.toarray())
            gap = float(vals[1])
        return gap, upper

    def _factor(self, t):
        key = float(t)
        lu = self._cache.get(key)
        if lu is None:
            A = (sp.identity(self.size, format="csc") + key * self.symmetrized).tocsc()
            lu = spla.splu(A)
            self._cache[key] = lu
            if len(self._cache) > 512:
                self._cache.popitem(last=False)
        else:
            self._cache.move_to_end(key)
        return lu


def build_operator(spec, grid):
    """Discretize L for weight ``spec`` on ``grid``."""
    if spec.dim != grid.dim:
        raise DomainError(f"weight dimension {spec.dim} does not match grid dimension {grid.dim}")
    x = grid.nodes
    v = np.asarray(spec.V(x), dtype=float)
    if not np.all(np.isfinite(v)):
        raise DomainError("V is not finite on every grid node")
    vmin = float(np.min(v))
    w = np.exp(-(v - vmin))
    ratio = float(np.max(w[grid.boundary_mask]) / np.max(w))
    if ratio >= TRUNCATION_TOL:
        raise TruncationError(
            f"boundary weight ratio {ratio:.3e} >= {TRUNCATION_TOL:g}; enlarge the box",
            suggested_box=2 * grid.half_width)
    if np.any(w == 0.0):
        raise TruncationError("node weights underflow; shrink the box", suggested_box=grid.half_width / 2)
    ei, ej, _ = grid.edges()
    mid = 0.5 * (x[ei] + x[ej])
    we = np.exp(-(np.asarray(spec.V(mid), dtype=float) - vmin))
    h = grid.h
    total = float(np.sum(w)) * h ** grid.dim
    grad_log = -np.asarray(spec.grad_V(x), dtype=float).reshape(grid.size, grid.dim)
    return WeightedOperator(
        spec=spec,
        grid=grid,
        weights=w / total,
        masses=w * h ** grid.dim / total,
        edge_i=ei,
        edge_j=ej,
        edge_weights=we / total,
        grad_log_M=grad_log,
    )


def _check_shape(op, f):
    f = np.asarray(f, dtype=float)
    if f.shape[0] != op.size:
        raise ValueError(f"vector has {f.shape[0]} entries, operator has {op.size} nodes")
    return f


def m_inner_product(op, f, g):
    """sum_i f_i g_i m_i; columns are paired when given 2-d arrays."""
    f = _check_shape(op, f)
    g = _check_shape(op, g)
    if f.shape != g.shape and not (f.ndim == 1 or g.ndim == 1):
        raise ValueError("shape mismatch")
    m = op.masses if max(f.ndim, g.ndim) == 1 else op.masses[:, None]
    out = np.sum(f * g * m, axis=0)
    return float(out) if np.ndim(out) == 0 else out


def m_norm(op, f):
    return np.sqrt(np.maximum(m_inner_product(op, f, f), 0.0))


def project_mean_zero(op, f):
    """Remove the M-weighted mean."""
    f = _check_shape(op, f)
    total = float(np.sum(op.masses))
    if f.ndim == 1:
        return f - np.dot(op.masses, f) / total
    return f - (op.masses @ f)[None, :] / total


def resolvent_apply(op, t, f, solver="direct", rtol=RESOLVENT_RTOL, maxiter=10_000):
    """Solve (I + t L) u = f; ``f`` may hold several right-hand sides as columns."""
    if not t > 0:
        raise ValueError("t must be positive")
    f = _check_shape(op, f)
    sq = np.sqrt(op.masses)
    sqc = sq if f.ndim == 1 else sq[:, None]
    b = sqc * f
    if solver == "direct":
        v = op._factor(t).solve(b)
    elif solver == "cg":
        A = sp.identity(op.size, format="csr") + t * op.symmetrized
        cols = b[:, None] if b.ndim == 1 else b
        out = np.empty_like(cols)
        for k in range(cols.shape[1]):
            x, info = spla.cg(A, cols[:, k], rtol=rtol * 1e-2, atol=0.0, maxiter=maxiter)
            if info != 0:
                res = np.linalg.norm(cols[:, k] - A @ x) / max(np.linalg.norm(cols[:, k]), 1e-300)
                raise SolverError(f"CG did not converge at t={t} (info={info})", residual=res)
            out[:, k] = x
        v = out[:, 0] if b.ndim == 1 else out
    else:
        raise ValueError(f"unknown solver {solver!r}")
    u = v / sqc
    res = _residual(op, t, f, u)
    if res > rtol:
        # one step of iterative refinement before giving up
        r = f - u - t * op.matvec(u)
        if solver == "direct":
            u = u + op._factor(t).solve(sqc * r) / sqc
        res = _residual(op, t, f, u)
        if res > rtol:
            raise SolverError(f"resolvent residual {res:.2e} exceeds {rtol:g} at t={t}", residual=res)
    return u


def _residual(op, t, f, u):
    r = f - u - t * op.matvec(u)
    nf = m_norm(op, f)
    nr = m_norm(op, r)
    if np.ndim(nf):
        nf = np.where(nf > 0, nf, 1.0)
        return float(np.max(nr / nf))
    return float(nr / nf) if nf > 0 else float(nr)


def write_triplets(op, path):
    """Write the nonzeros of L as ``row col value`` lines (0-based indices)."""
    L = op.matrix.tocoo()
    g = op.grid
    order = np.lexsort((L.col, L.row))
    with open(path, "w") as fh:
        fh.write("# fracpoincare sparse triplets of L = -M^-1 div(M grad .)\n")
        fh.write(f"# weight={op.spec.name} dim={g.dim} points={g.points} box={g.half_width!r}\n")
        fh.write(f"# shape={op.size} {op.size} nnz={L.nnz}\n")
        fh.write("# row col value\n")
        for k in order:
            fh.write(f"{L.row[k]} {L.col[k]} {float(L.data[k])!r}\n")


def read_triplets(path):
    """Read a triplet file back into a CSR matrix."""
    rows, cols, vals = [], [], []
    shape = None
    with open(path) as fh:
        for line in fh:
            if line.startswith("# shape="):
                a, b = line.split("=", 1)[1].split()[:2]
                shape = (int(a), int(b))
            if line.startswith("#") or not line.strip():
                continue
            r, c, v = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(v))
    return sp.csr_matrix((vals, (rows, cols)), shape=shape)


def grid_from_spacing(dim, half_width, h):
    """Grid whose spacing is the largest one not exceeding ``h``."""
    points = int(math.ceil(2 * half_width / h)) + 1
    return Grid(dim, half_width, points)
