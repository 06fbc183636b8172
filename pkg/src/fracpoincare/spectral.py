"""Spectral calculus for the discretized generator.

Two independent routes to fractional powers are provided: the eigenbasis
(``fractional_apply_spectral``) and a resolvent quadrature of the
Balakrishnan integral (``fractional_apply_balakrishnan``), which never looks
at eigenvectors. The quadratic functional

    I_A(f) = int_0^A t^{-1-alpha/2} ||t L (I + t L)^{-1} f||_M^2 dt

is likewise computed from resolvent solves and, when an eigendecomposition is
at hand, from its closed spectral form.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy.special import betainc, beta as beta_fn

from .errors import PremiseError, SolverError, UnsupportedModeError
from .operator import project_mean_zero, resolvent_apply

__all__ = [
    "SpectralDecomposition",
    "QuadraticEstimateResult",
    "MonotoneCheckResult",
    "QuadratureWarning",
    "eigendecompose",
    "fractional_apply_spectral",
    "fractional_apply_balakrishnan",
    "balakrishnan_quadrature",
    "quadratic_constant",
    "quadratic_functional",
    "quadratic_functional_spectral",
    "tail_bound",
    "monotone_power_check",
    "write_eigenvalues_csv",
]

DENSE_CAP = 4096
# decades added beyond the spectrum on each side of the log quadratures
TAIL_DECADES = 8.0
STABILITY_RTOL = 1e-6


class QuadratureWarning(UserWarning):
    """Doubling the quadrature nodes moved the result by more than the tolerance."""


@dataclass
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, orthonormal in the masses inner product
    masses: np.ndarray
    full: bool = True
    residuals: np.ndarray | None = None

    @property
    def gap(self):
        return float(self.eigenvalues[1])

    def coefficients(self, f):
        f = np.asarray(f, dtype=float)
        m = self.masses if f.ndim == 1 else self.masses[:, None]
        return self.eigenvectors.T @ (m * f)

    def power(self, beta, f):
        """sum_k lambda_k^beta <f, phi_k> phi_k for any beta >= 0 (0^beta = 0 for beta > 0)."""
        if not self.full:
            raise UnsupportedModeError("spectral powers need a full eigendecomposition")
        c = self.coefficients(f)
        lam = self.eigenvalues
        with np.errstate(divide="ignore"):
            p = np.where(lam > 0, lam ** beta, 0.0) if beta > 0 else np.ones_like(lam)
        scaled = p * c if c.ndim == 1 else p[:, None] * c
        return self.eigenvectors @ scaled

    def form(self, beta, f):
        """<L^beta f, f> through the eigen-coefficients."""
        c = self.coefficients(f)
        lam = self.eigenvalues
        p = np.where(lam > 0, lam ** beta, 0.0) if beta > 0 else np.ones_like(lam)
        return (p @ c ** 2) if c.ndim == 1 else p @ (c ** 2)


def eigendecompose(op, k=None, dense_cap=DENSE_CAP):
    """Eigenpairs of L, M-orthonormal; all of them or the ``k`` smallest."""
    S = op.symmetrized
    if k is None:
        if op.size > dense_cap:
            raise UnsupportedModeError(
                f"full decomposition limited to {dense_cap} nodes (got {op.size}); pass k")
        try:
            lam, psi = sla.eigh(S.toarray())
        except sla.LinAlgError as exc:
            raise SolverError(f"dense eigensolver failed: {exc}") from exc
        full = True
    else:
        if k < 2:
            raise ValueError("partial decomposition needs k >= 2")
        try:
            lam, psi = spla.eigsh(S, k=k, sigma=-1.0, which="LM", v0=np.sqrt(op.masses))
        except Exception as exc:
            raise SolverError(f"sparse eigensolver failed: {exc}") from exc
        order = np.argsort(lam)
        lam, psi = lam[order], psi[:, order]
        full = k >= op.size
    phi = psi / np.sqrt(op.masses)[:, None]
    # the constant mode is an exact kernel vector of the scheme
    lam = np.maximum(lam, 0.0)
    if lam[0] <= 1e-10 * lam[1]:
        lam[0] = 0.0
    # fix signs so the largest-magnitude entry of each mode is positive
    idx = np.argmax(np.abs(phi), axis=0)
    phi = phi * np.sign(phi[idx, np.arange(phi.shape[1])])
    resid = op.matvec(phi) - phi * lam[None, :]
    res = np.sqrt(np.sum(resid ** 2 * op.masses[:, None], axis=0))
    return SpectralDecomposition(lam, phi, op.masses.copy(), full=full, residuals=res)


def fractional_apply_spectral(dec, beta, f):
    """L^beta f through the eigenbasis, beta in (0, 1)."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    return dec.power(beta, f)


def _log_panels(lo, hi, nodes_per_panel):
    """Composite Gauss-Legendre in s = log(x) with one panel per decade."""
    s_lo, s_hi = math.log(lo), math.log(hi)
    n_panels = max(1, int(math.ceil((s_hi - s_lo) / math.log(10.0))))
    edges = np.linspace(s_lo, s_hi, n_panels + 1)
    t, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    ws = (half[:, None] * w[None, :]).ravel()
    return np.exp(s), ws


def _until_stable(evaluate, nodes, rtol, max_doublings, what, vector=False):
    """Double the nodes until the relative shift is below rtol.

    Shifts are entrywise for scalar outputs and per column (Euclidean norm)
    when ``vector`` is set.
    """
    prev = evaluate(nodes)
    for _ in range(max_doublings):
        nodes *= 2
        cur = evaluate(nodes)
        if vector:
            diff = np.linalg.norm(cur - prev, axis=0)
            scale = np.maximum(np.linalg.norm(cur, axis=0), 1e-300)
        else:
            diff, scale = np.abs(cur - prev), np.maximum(np.abs(cur), 1e-300)
        shift = float(np.max(diff / scale))
        if shift <= rtol:
            return cur, shift, nodes
        prev = cur
    warnings.warn(f"{what}: doubling nodes still shifts the result by {shift:.2e}",
                  QuadratureWarning, stacklevel=3)
    return cur, shift, nodes


def balakrishnan_quadrature(resolvent_part, apply_L, f, beta, lam_lo, lam_hi,
                            nodes_per_decade=16):
    """sin(pi beta)/pi * int_0^inf lambda^(beta-1) L (L + lambda)^{-1} f dlambda.

    ``resolvent_part(t, f)`` must return t L (I + t L)^{-1} f and ``apply_L``
    must apply L; ``f`` must have no kernel component. The integral runs over
    [lam_lo, lam_hi] in log variables with closed-form leading-order tails.
    """
    lam, w = _log_panels(lam_lo, lam_hi, nodes_per_decade)
    acc = np.zeros_like(np.asarray(f, dtype=float))
    for lk, wk in zip(lam, w):
        acc += (wk * lk ** beta) * resolvent_part(1.0 / lk, f)
    acc += f * lam_lo ** beta / beta
    acc += apply_L(f) * lam_hi ** (beta - 1.0) / (1.0 - beta)
    return math.sin(math.pi * beta) / math.pi * acc


def _resolvent_part(op, solver):
    def part(t, f):
        u = resolvent_apply(op, t, f, solver=solver)
        return t * op.matvec(u)

    return part


def fractional_apply_balakrishnan(op, beta, f, nodes_per_decade=16, lambda_range=None,
                                  check=True, rtol=STABILITY_RTOL, solver="direct"):
    """L^beta f from resolvent solves only; f is projected to mean zero first."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    f0 = project_mean_zero(op, f)
    if lambda_range is None:
        lam_min, lam_max = op.spectral_bounds
    else:
        lam_min, lam_max = lambda_range
    lo = lam_min * 10.0 ** (-TAIL_DECADES)
    hi = lam_max * 10.0 ** TAIL_DECADES
    part = _resolvent_part(op, solver)

    def evaluate(n):
        return balakrishnan_quadrature(part, op.matvec, f0, beta, lo, hi, n)

    if not check:
        return evaluate(nodes_per_decade)
    out, _, _ = _until_stable(evaluate, nodes_per_decade, rtol, 3, "Balakrishnan quadrature", vector=True)
    return out


def quadratic_constant(alpha):
    """C(alpha) = int_0^inf u^{1-alpha/2} (1+u)^{-2} du = (1 - alpha/2) pi / sin(pi alpha/2)."""
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    return (1.0 - alpha / 2.0) * math.pi / math.sin(math.pi * alpha / 2.0)


@dataclass
class QuadraticEstimateResult:
    alpha: float
    A: float
    value: np.ndarray | float
    tail_bound: np.ndarray | float  # eps(A) ||f||_M^2
    quad_error: float
    spectral_value: np.ndarray | float | None = None


def tail_bound(alpha, A, f_norm=1.0):
    """eps(A) ||f||^2 with eps(A) = (2/alpha) A^{-alpha/2}; bounds I_inf - I_A."""
    if not A > 0:
        raise ValueError("A must be positive")
    if math.isinf(A):
        return 0.0 * f_norm
    return (2.0 / alpha) * A ** (-alpha / 2.0) * np.asarray(f_norm) ** 2


def _norm2(op, v):
    m = op.masses if v.ndim == 1 else op.masses[:, None]
    return np.sum(v * v * m, axis=0)


def quadratic_functional(op, alpha, f, A=math.inf, dec=None, nodes_per_decade=16,
                         check=True, rtol=STABILITY_RTOL, solver="direct"):
    """I_A(f) by log-t Gauss-Legendre over resolvent solves (columns of f in parallel)."""
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    if not A > 0:
        raise ValueError("A must be positive")
    f0 = project_mean_zero(op, f)
    gap, lam_max = op.spectral_bounds
    t_lo = 10.0 ** (-TAIL_DECADES) / lam_max
    t_far = 10.0 ** TAIL_DECADES / gap
    t_hi = min(A, t_far)
    a2 = alpha / 2.0
    part = _resolvent_part(op, solver)
    Lf2 = _norm2(op, op.matvec(f0))
    f2 = _norm2(op, f0)

    def evaluate(n):
        lo = min(t_lo, t_hi)
        val = Lf2 * lo ** (2.0 - a2) / (2.0 - a2)
        if t_hi > lo:
            ts, ws = _log_panels(lo, t_hi, n)
            for tk, wk in zip(ts, ws):
                val = val + wk * tk ** (-a2) * _norm2(op, part(tk, f0))
        if A > t_far:
            upper = 0.0 if math.isinf(A) else A ** (-a2)
            val = val + f2 * (t_far ** (-a2) - upper) / a2
        return val

    if check:
        value, shift, _ = _until_stable(evaluate, nodes_per_decade, rtol, 3, "quadratic functional")
    else:
        value, shift = evaluate(nodes_per_decade), float("nan")
    value = np.maximum(value, 0.0)
    spectral = None if dec is None else quadratic_functional_spectral(dec, alpha, f0, A)
    if np.ndim(value) == 0:
        value = float(value)
    return QuadraticEstimateResult(alpha, A, value, tail_bound(alpha, A, np.sqrt(f2)), shift, spectral)


def quadratic_functional_spectral(dec, alpha, f, A=math.inf):
    """Closed form sum_k c_k^2 lambda_k^{alpha/2} B(A lambda_k/(1 + A lambda_k); 2 - alpha/2, alpha/2)."""
    if not dec.full:
        raise UnsupportedModeError("closed-form I_A needs a full eigendecomposition")
    c = dec.coefficients(f)
    lam = dec.eigenvalues
    a, b = 2.0 - alpha / 2.0, alpha / 2.0
    pos = lam > 0
    weight = np.zeros_like(lam)
    if math.isinf(A):
        weight[pos] = quadratic_constant(alpha) * lam[pos] ** b
    else:
        x = A * lam[pos] / (1.0 + A * lam[pos])
        weight[pos] = lam[pos] ** b * betainc(a, b, x) * beta_fn(a, b)
    out = weight @ (c ** 2)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class MonotoneCheckResult:
    holds: bool
    worst_margin: float
    premise_margin: float
    margins: np.ndarray


def monotone_power_check(dec, mu, lambda_prime, alpha, trials, tol=1e-8, premise_tol=1e-10):
    """Check <L^{alpha/2} f, f> >= lambda'^{alpha/2} <mu^{alpha/2} f, f> on trial columns.

    The premise <L f, f> >= lambda' <mu f, f> is verified first; margins are
    normalised by ||f||^2.
    """
    if not 0 < alpha <= 2:
        raise ValueError("alpha must lie in (0, 2]")
    if not dec.full:
        raise UnsupportedModeError("monotonicity check needs a full eigendecomposition")
    F = np.asarray(trials, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise ValueError("multiplier must be nonnegative")
    m = dec.masses[:, None]
    norm2 = np.sum(F * F * m, axis=0)
    lf = dec.form(1.0, F)
    muf = np.sum(mu[:, None] * F * F * m, axis=0)
    premise = (lf - lambda_prime * muf) / norm2
    if np.min(premise) < -premise_tol:
        raise PremiseError(
            f"premise fails: worst margin {np.min(premise):.3e}", worst_margin=float(np.min(premise)))
    s = alpha / 2.0
    lhs = dec.form(s, F)
    rhs = lambda_prime ** s * np.sum(mu[:, None] ** s * F * F * m, axis=0)
    margins = (lhs - rhs) / norm2
    worst = float(np.min(margins))
    return MonotoneCheckResult(worst >= -tol, worst, float(np.min(premise)), margins)


def write_eigenvalues_csv(dec, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "eigenvalue", "residual"])
        res = dec.residuals if dec.residuals is not None else [float("nan")] * len(dec.eigenvalues)
        for i, (lam, r) in enumerate(zip(dec.eigenvalues, res)):
            w.writerow([i, repr(float(lam)), repr(float(r))])
