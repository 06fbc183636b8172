"""Constants, trial functions and inequality certificates.

The fractional constant is assembled from four links, each computed on the
grid for mean-zero f:

    lambda'^{a/2} <mu^{a/2} f, f>  <=  ||L^{a/4} f||^2               (operator monotonicity)
    ||L^{a/4} f||^2                 =  C3 I_inf(f),  C3 = 1/C(a)      (quadratic estimate)
    I_inf(f)                       <=  I_A(f) + eps(A) ||f||^2
    I_A(f)                         <=  C4 G_{c'}(f)                   (trial envelope)

with a = alpha and G_{c'} the seminorm tempered by exp(-c'|x - y|). Since
mu >= 1 the tail is absorbed into the left side, and the sum-form multiplier
1 + |grad ln M|^a is at most twice the power form, so

    G_{c'}(f) >= lambda_chain (1 + |grad ln M|^a) moment,
    lambda_chain = (lambda'^{a/2} - C3 eps) / (2 C3 C4).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import DegenerateError, InfeasibleError, SolverError
from .gagliardo import gagliardo_seminorm, sphere_area, weighted_moment
from .operator import m_norm, project_mean_zero
from .spectral import (quadratic_constant, quadratic_functional,
                       quadratic_functional_spectral, tail_bound)

__all__ = [
    "TrialSet",
    "ChainRecord",
    "FractionalCheck",
    "InequalityReport",
    "make_trial_set",
    "multiplier",
    "rayleigh_quotients",
    "estimate_lambda",
    "estimate_lambda_prime",
    "ground_state_bound",
    "default_A",
    "tempering_rate",
    "fit_constant_chain",
    "verify_fractional_poincare",
    "classical_limit",
]

DEFAULT_GENERATORS = {"eigen": 8, "indicator": 8, "random": 16}
PENCIL_DENSE_CAP = 4096


@dataclass
class TrialSet:
    names: list
    F: np.ndarray  # (N, m), mean-zero and M-normalised columns
    seed: int

    def __len__(self):
        return len(self.names)


def _spread(op):
    """Per-axis standard deviation of the discrete measure."""
    x = op.grid.nodes
    mean = op.masses @ x
    return math.sqrt(float(op.masses @ np.sum((x - mean) ** 2, axis=1)) / op.dim)


def _smoothed_box(x, lo, hi, edge):
    val = np.ones(len(x))
    for d in range(x.shape[1]):
        val *= 0.25 * (1 + np.tanh((x[:, d] - lo[d]) / edge)) * (1 - np.tanh((x[:, d] - hi[d]) / edge))
    return val


def make_trial_set(op, dec=None, seed=0, eigen=8, indicator=8, random=16, poly=0):
    """Mean-zero, M-normalised trial functions.

    eigen: the first nonconstant eigenvectors (needs dec).
    indicator: tanh-smoothed indicators of boxes of side sigma, edges 0.1 sigma.
    random: seeded sums of four Gaussian bumps at the scale of the measure.
    poly: monomials x_d^k times M^b for k = 1..poly and b in {0, 1/4}.
    """
    x = op.grid.nodes
    n = op.dim
    sigma = _spread(op)
    cols, names = [], []
    if eigen:
        if dec is None:
            raise ValueError("eigenvector trials need a decomposition")
        k = min(eigen, dec.eigenvectors.shape[1] - 1)
        for i in range(1, k + 1):
            cols.append(dec.eigenvectors[:, i])
            names.append(f"eig{i}")
    for i in range(indicator):
        r = sigma * (0.5 + 1.5 * i / max(1, indicator - 1))
        angle = 2 * math.pi * i / max(1, indicator) if n > 1 else 0.0
        sign = -1 if i % 2 else 1
        c = np.array([sign * r * math.cos(angle), r * math.sin(angle)][:n])
        cols.append(_smoothed_box(x, c - sigma / 2, c + sigma / 2, 0.1 * sigma))
        names.append(f"ind{i}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    for i in range(random):
        centers = rng.normal(0.0, sigma, size=(4, n))
        widths = sigma * rng.uniform(0.3, 1.0, size=4)
        amps = rng.normal(size=4)
        v = np.zeros(len(x))
        for c, w, a in zip(centers, widths, amps):
            v += a * np.exp(-np.sum((x - c) ** 2, axis=1) / (2 * w * w))
        cols.append(v)
        names.append(f"rand{i:02d}")
    for k in range(1, poly + 1):
        for b in (0.0, 0.25):
            for d in range(n):
                cols.append(x[:, d] ** k * op.weights ** b)
                names.append(f"poly_x{d}^{k}_M^{b:g}")
    if not cols:
        raise ValueError("trial set is empty")
    F = project_mean_zero(op, np.column_stack(cols))
    norms = m_norm(op, F)
    keep = norms > 1e-12
    F = F[:, keep] / norms[keep]
    names = [nm for nm, k in zip(names, keep) if k]
    return TrialSet(names, F, seed)


def multiplier(op):
    """mu = 1 + |grad ln M|^2 at the grid nodes."""
    return 1.0 + np.sum(op.grad_log_M ** 2, axis=1)


def rayleigh_quotients(op, F):
    """<L f, f>_M / ||f||_M^2 column by column."""
    F = np.atleast_2d(np.asarray(F, dtype=float).T).T
    return op.dirichlet_form(F) / m_norm(op, F) ** 2


def estimate_lambda(dec):
    """Classical spectral gap lambda_1."""
    lam = float(dec.gap)
    if not lam > 0:
        raise DegenerateError(f"nonpositive spectral gap {lam:g}")
    return lam


def _complement_basis(u):
    """Householder reflector whose trailing columns span the orthogonal complement of unit u."""
    w = u.copy()
    w[0] -= 1.0 if u[0] < 0 else -1.0
    w /= np.linalg.norm(w)
    H = np.eye(len(u)) - 2.0 * np.outer(w, w)
    return H


def estimate_lambda_prime(op, mu=None):
    """Smallest eigenvalue of the pencil (L, mu) on mean-zero functions."""
    mu = multiplier(op) if mu is None else np.asarray(mu, dtype=float)
    if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
        raise ValueError("multiplier must be finite and positive")
    sq = np.sqrt(op.masses)
    S = op.symmetrized
    if op.size <= PENCIL_DENSE_CAP:
        H = _complement_basis(sq)
        A = (H @ (S @ H))[1:, 1:]
        B = (H * mu[None, :] @ H)[1:, 1:]
        try:
            val = sla.eigh(A, B, eigvals_only=True, subset_by_index=[0, 0])[0]
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SolverError(f"pencil eigensolve failed: {exc}") from exc
        return float(val)
    # large grids: constrained LOBPCG in the symmetrised variables
    rng = np.random.default_rng(0)
    X = rng.normal(size=(op.size, 4))
    B = spla.aslinearoperator(spla.LinearOperator((op.size, op.size), matvec=lambda v: mu * v.ravel(),
                                                  dtype=float))
    vals, _ = spla.lobpcg(S, X, B=B, Y=sq[:, None], largest=False, tol=1e-10, maxiter=2000)
    return float(np.min(vals))


def ground_state_bound(op, lam, kappas=None):
    """max over kappa of beta lam / (beta + lam + gamma) with beta = (1 - kappa)/4 and
    gamma = max_x (Delta V / 2 - kappa |grad V|^2 / 4) over the grid nodes."""
    spec = op.spec
    x = op.grid.nodes
    s2 = np.sum(op.grad_log_M ** 2, axis=1)
    lap = np.asarray(spec.lap_V(x), dtype=float)
    kappas = np.linspace(0.0, 0.99, 100) if kappas is None else np.asarray(kappas)
    best, best_k = 0.0, None
    for k in kappas:
        beta = (1.0 - k) / 4.0
        gamma = max(0.0, float(np.max(0.5 * lap - k * s2 / 4.0)))
        if not math.isfinite(gamma):
            continue
        val = beta * lam / (beta + lam + gamma)
        if val > best:
            best, best_k = val, float(k)
    return best, best_k


def default_A(alpha, lambda_prime):
    """Smallest power of two with eps(A) <= lambda'^{alpha/2} / 2."""
    target = 0.5 * lambda_prime ** (alpha / 2)
    k = 0
    while tail_bound(alpha, 2.0 ** k) > target:
        k += 1
    return 2.0 ** k


def tempering_rate(c1, dim, A):
    """c' = c1 / sqrt(n A): annulus weights exp(-2 c1 2^k) at |x - y| ~ 2^{k+1} sqrt(n A)."""
    return c1 / math.sqrt(dim * A)


@dataclass
class ChainRecord:
    alpha: float
    A: float
    C3: float
    eps: float
    lambda_prime: float
    C4_hat: float
    c_prime_hat: float
    lambda_chain: float
    lambda_empirical: float
    absorption: float  # 1 - C3 eps lambda'^{-alpha/2}
    I_A: np.ndarray = field(repr=False, default=None)
    seminorm: np.ndarray = field(repr=False, default=None)
    moment: np.ndarray = field(repr=False, default=None)
    violations: int = 0
    argmax_C4: int = 0
    argmin_ratio: int = 0

    @property
    def delta_hat(self):
        return self.c_prime_hat


def fit_constant_chain(op, dec, alpha, trials, lambda_prime, c1, A=None, jobs=1):
    """Assemble lambda_alpha from lambda', the quadratic estimate, and a fitted C4."""
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    if not lambda_prime > 0:
        raise ValueError("lambda' must be positive")
    if not c1 > 0:
        raise ValueError("decay rate must be positive")
    if len(trials) == 0:
        raise ValueError("trial set is empty")
    A = default_A(alpha, lambda_prime) if A is None else float(A)
    C3 = 1.0 / quadratic_constant(alpha)
    eps = float(tail_bound(alpha, A))
    lp = lambda_prime ** (alpha / 2)
    absorption = 1.0 - C3 * eps / lp
    if absorption <= 0:
        raise InfeasibleError(
            f"eps(A) = {eps:.4g} too large for lambda' = {lambda_prime:.4g}; "
            f"use A >= {default_A(alpha, lambda_prime):g}")
    c_prime = tempering_rate(c1, op.dim, A)
    F = trials.F
    if dec is not None and dec.full:
        I_A = np.atleast_1d(quadratic_functional_spectral(dec, alpha, F, A))
    else:
        I_A = np.atleast_1d(quadratic_functional(op, alpha, F, A).value)
    G = np.atleast_1d(gagliardo_seminorm(op, F, alpha, c_prime, jobs=jobs).value)
    if np.any((G <= 0) & (I_A > 0)):
        bad = [trials.names[i] for i in np.flatnonzero((G <= 0) & (I_A > 0))]
        raise DegenerateError(f"zero seminorm with nonzero I_A for trials {bad}")
    ratios = np.where(G > 0, I_A / np.where(G > 0, G, 1.0), 0.0)
    C4 = float(np.max(ratios))
    if not C4 > 0:
        raise DegenerateError("every trial has I_A = 0; C4 cannot be fitted")
    lam_chain = (lp - C3 * eps) / (2.0 * C3 * C4)
    S = np.atleast_1d(weighted_moment(op, F, alpha, mode="sum"))
    cert = G / S
    violations = int(np.sum(G < lam_chain * S))
    return ChainRecord(alpha, A, C3, eps, lambda_prime, C4, c_prime, float(lam_chain),
                       float(np.min(cert)), absorption, I_A, G, S, violations,
                       int(np.argmax(ratios)), int(np.argmin(cert)))


@dataclass
class FractionalCheck:
    alpha: float
    delta: float
    candidate: float
    min_ratio: float
    argmin: str
    passed: bool
    untempered_min_ratio: float  # min G_0(f) / ||f||^2
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)


def verify_fractional_poincare(op, alpha, delta, candidate, trials, jobs=1):
    """min over trials of G_delta(f) / sum-form moment, compared with a candidate constant."""
    if len(trials) == 0:
        raise ValueError("trial set is empty")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    F = trials.F
    lhs = np.atleast_1d(gagliardo_seminorm(op, F, alpha, delta, jobs=jobs).value)
    rhs = np.atleast_1d(weighted_moment(op, F, alpha, mode="sum"))
    ratios = lhs / rhs
    i = int(np.argmin(ratios))
    if delta == 0:
        g0 = lhs
    else:
        g0 = np.atleast_1d(gagliardo_seminorm(op, F, alpha, 0.0, jobs=jobs).value)
    untempered = float(np.min(g0 / m_norm(op, F) ** 2))
    return FractionalCheck(alpha, delta, candidate, float(ratios[i]), trials.names[i],
                           bool(ratios[i] >= candidate), untempered, lhs, rhs)


def classical_limit(op, f, alphas=(1.9, 1.95)):
    """(2 - alpha) G_0(f) / (sigma_{n-1} <L f, f>_M) for alpha near 2; tends to 1/n."""
    f = project_mean_zero(op, f)
    energy = float(op.dirichlet_form(f))
    sigma = sphere_area(op.dim)
    out = {}
    for a in alphas:
        g = gagliardo_seminorm(op, f, a).value
        out[a] = (2 - a) * g / (sigma * energy)
    return out


@dataclass
class InequalityReport:
    weight: str
    dim: int
    points: int
    half_width: float
    lambda_hat: float
    lambda_prime_hat: float
    ground_state_bound: float
    chains: list = field(default_factory=list)  # ChainRecord per alpha
    checks: list = field(default_factory=list)  # FractionalCheck per alpha
    trial_names: list = field(default_factory=list)
    provenance: dict = field(default_factory=lambda: {
        "lambda_hat": "dense eigensolve",
        "lambda_prime_hat": "mean-zero pencil eigensolve",
        "ground_state_bound": "ground-state bound on grid samples",
        "C3": "closed form 1/C(alpha)",
        "eps": "closed form (2/alpha) A^(-alpha/2)",
        "C4_hat": "fitted: trial-set envelope of I_A / G",
        "c_prime_hat": "fitted: Gaffney decay rate / sqrt(n A)",
        "lambda_alpha_chain": "assembled from the links above",
        "lambda_alpha_empirical": "trial-set minimum",
    })

    def to_dict(self):
        def chain(c):
            return {"alpha": c.alpha, "A": c.A, "C3": c.C3, "eps": c.eps, "C4_hat": c.C4_hat,
                    "c_prime_hat": c.c_prime_hat, "delta_hat": c.delta_hat,
                    "lambda_alpha_chain": c.lambda_chain,
                    "lambda_alpha_empirical": c.lambda_empirical,
                    "absorption": c.absorption, "violations": c.violations,
                    "argmax_C4": self.trial_names[c.argmax_C4] if self.trial_names else c.argmax_C4,
                    "argmin_ratio": self.trial_names[c.argmin_ratio] if self.trial_names else c.argmin_ratio}

        def check(c):
            return {"alpha": c.alpha, "delta": c.delta, "candidate": c.candidate,
                    "min_ratio": c.min_ratio, "argmin": c.argmin, "passed": c.passed,
                    "untempered_min_ratio": c.untempered_min_ratio}

        return {"weight": self.weight, "dim": self.dim, "points": self.points,
                "half_width": self.half_width, "lambda_hat": self.lambda_hat,
                "lambda_prime_hat": self.lambda_prime_hat, "ground_state_bound": self.ground_state_bound,
                "chains": [chain(c) for c in self.chains], "checks": [check(c) for c in self.checks],
                "provenance": self.provenance}

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_trials_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "trial", "lhs", "rhs", "ratio", "I_A", "chain_bound"])
            for c in self.chains:
                for i, name in enumerate(self.trial_names):
                    lhs, rhs = c.seminorm[i], c.moment[i]
                    w.writerow([repr(c.alpha), name, repr(float(lhs)), repr(float(rhs)),
                                repr(float(lhs / rhs)), repr(float(c.I_A[i])),
                                repr(c.lambda_chain * float(rhs))])
