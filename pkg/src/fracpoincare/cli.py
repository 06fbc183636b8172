"""Command-line runner: configure, run the enabled checks, write artifacts."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path

import numpy as np

from . import __version__
from .config import (CHECKS, DIAGNOSTIC_CHECKS, load_config, validate, with_overrides,
                     ExperimentConfig)
from .errors import ConfigError, FracPoincareError
from .gagliardo import gagliardo_seminorm
from .harness import (InequalityReport, ground_state_bound, classical_limit, estimate_lambda,
                      estimate_lambda_prime, fit_constant_chain, make_trial_set, multiplier,
                      rayleigh_quotients, verify_fractional_poincare)
from .localization import (covering_constant, covering_count, cube_family, cube_oscillations,
                           fit_decay, region_pair, write_cubes_csv, write_gaffney_csv)
from .measure import weight_from_string
from .operator import Grid, build_operator, m_norm, project_mean_zero
from .spectral import (eigendecompose, fractional_apply_balakrishnan, fractional_apply_spectral,
                       monotone_power_check, quadratic_constant, quadratic_functional)

__all__ = ["CheckResult", "RunManifest", "run", "main"]

QUADRATIC_RTOL = 1e-6
BALAKRISHNAN_RTOL = 1e-6
MONOTONE_TOL = 1e-8
GAFFNEY_R2 = 0.95
GAFFNEY_BOUND = 8.0


@dataclass
class CheckResult:
    name: str
    status: str  # "pass" | "fail" | "diagnostic" | "error"
    message: str = ""
    data: dict = field(default_factory=dict)

    @property
    def asserted(self):
        return self.name not in DIAGNOSTIC_CHECKS


@dataclass
class RunManifest:
    config_hash: str
    version: str
    checks: list  # [{"name", "status", "seconds"}]
    started: str = ""
    finished: str = ""

    @property
    def ok(self):
        return all(c["status"] in ("pass", "diagnostic") for c in self.checks)

    def failures(self):
        return [c for c in self.checks if c["status"] not in ("pass", "diagnostic")]


class _Context:
    """Lazily computed shared state; each quantity is built once, on first use."""

    def __init__(self, cfg):
        self.cfg = cfg

    @cached_property
    def spec(self):
        return weight_from_string(self.cfg.weight, self.cfg.dim)

    @cached_property
    def op(self):
        return build_operator(self.spec, Grid(self.cfg.dim, float(self.cfg.half_width), self.cfg.points))

    @cached_property
    def dec(self):
        return eigendecompose(self.op)

    @cached_property
    def lam(self):
        return estimate_lambda(self.dec)

    @cached_property
    def lam_prime(self):
        return estimate_lambda_prime(self.op)

    @cached_property
    def trials(self):
        return make_trial_set(self.op, self.dec, seed=self.cfg.seed, **self.cfg.trials)

    def random_smooth(self, count, stream):
        """Seeded smooth mean-zero functions independent of the main trial set."""
        seed = [self.cfg.seed, stream]
        return make_trial_set(self.op, None, seed=seed, eigen=0, indicator=0, random=count).F

    def random_vectors(self, count, stream):
        rng = np.random.default_rng([self.cfg.seed, stream])
        F = project_mean_zero(self.op, rng.normal(size=(self.op.size, count)))
        return F / m_norm(self.op, F)

    @cached_property
    def fits(self):
        out = {}
        for i, p in enumerate(self.cfg.gaffney_pairs):
            pair = region_pair(self.op.grid, p["E"], p["F"])
            out[f"pair{i}"] = fit_decay(self.op, pair, self.cfg.gaffney_t)
        return out

    @cached_property
    def c1(self):
        return min(f.c1 for f in self.fits.values())

    @cached_property
    def chains(self):
        A = None if self.cfg.A == "auto" else float(self.cfg.A)
        return {a: fit_constant_chain(self.op, self.dec, a, self.trials, self.lam_prime, self.c1,
                                      A=A, jobs=self.cfg.jobs)
                for a in self.cfg.alpha}


def _check_classical(ctx):
    lam = ctx.lam
    rq = rayleigh_quotients(ctx.op, ctx.trials.F)
    worst = float(np.min(rq - lam))
    ok = worst >= -1e-10
    return ok, f"lambda_hat = {lam:.6g}; worst Rayleigh margin {worst:.3e}", {
        "lambda_hat": lam, "worst_margin": worst}


def _check_improved(ctx):
    lam, lp = ctx.lam, ctx.lam_prime
    mu = multiplier(ctx.op)
    F = ctx.trials.F
    energy = ctx.op.dirichlet_form(F)
    weighted = np.sum(mu[:, None] * F * F * ctx.op.masses[:, None], axis=0)
    worst = float(np.min((energy - lp * weighted) / m_norm(ctx.op, F) ** 2))
    bound, kappa = ground_state_bound(ctx.op, lam)
    ok = lp > 0 and lp <= lam * (1 + 1e-10) and worst >= -1e-10
    return ok, (f"lambda'_hat = {lp:.6g}; pencil margin {worst:.3e}; "
                f"ground-state bound {bound:.4g}"), {
        "lambda_prime_hat": lp, "pencil_margin": worst, "ground_state_bound": bound, "kappa": kappa}


def _check_quadratic(ctx):
    F = ctx.random_smooth(ctx.cfg.quadratic_trials, 1)
    worst_q, worst_b = 0.0, 0.0
    for a in ctx.cfg.alpha:
        I = np.atleast_1d(quadratic_functional(ctx.op, a, F).value)
        ref = quadratic_constant(a) * ctx.dec.form(a / 2, F)
        worst_q = max(worst_q, float(np.max(np.abs(I - ref) / ref)))
    for b in ctx.cfg.quadratic_beta:
        num = fractional_apply_balakrishnan(ctx.op, b, F)
        ref = fractional_apply_spectral(ctx.dec, b, F)
        rel = m_norm(ctx.op, num - ref) / m_norm(ctx.op, ref)
        worst_b = max(worst_b, float(np.max(rel)))
    ok = worst_q <= QUADRATIC_RTOL and worst_b <= BALAKRISHNAN_RTOL
    return ok, f"I_inf identity rel err {worst_q:.2e}; Balakrishnan rel err {worst_b:.2e}", {
        "quadratic_rel_error": worst_q, "balakrishnan_rel_error": worst_b}


def _check_monotone(ctx):
    F = np.column_stack([ctx.trials.F, ctx.random_vectors(ctx.cfg.monotone_trials, 2)])
    mu = multiplier(ctx.op)
    worst = math.inf
    for a in ctx.cfg.alpha:
        res = monotone_power_check(ctx.dec, mu, ctx.lam_prime, a, F, tol=MONOTONE_TOL)
        worst = min(worst, res.worst_margin)
    ok = worst >= -MONOTONE_TOL
    return ok, f"worst margin {worst:.3e}", {"worst_margin": worst}


def _check_gaffney(ctx):
    data, ok, parts = {}, True, []
    for label, fit in ctx.fits.items():
        good = (fit.c1 > 0 and fit.r2 >= GAFFNEY_R2 and fit.envelope_res <= GAFFNEY_BOUND
                and fit.envelope_tL <= GAFFNEY_BOUND)
        ok &= good
        data[label] = {"c1": fit.c1, "c1_fit": fit.c1_fit, "r2": fit.r2,
                       "envelope_res": fit.envelope_res, "envelope_tL": fit.envelope_tL}
        parts.append(f"{label}: C1 = {fit.c1:.4g}, R2 = {fit.r2:.4f}, "
                     f"envelopes {fit.envelope_res:.3g}/{fit.envelope_tL:.3g}")
    return ok, "; ".join(parts), data


def _check_covering(ctx):
    rng = np.random.default_rng([ctx.cfg.seed, 3])
    violations, worst = 0, 0.0
    for n in (1, 2):
        cn = covering_constant(n)
        for theta in ctx.cfg.covering_theta:
            for _ in range(ctx.cfg.covering_samples):
                x = rng.uniform(-5, 5, size=n)
                t = float(rng.uniform(0.01, 4.0))
                c = covering_count(t, theta, x)
                bound = cn * theta ** n
                worst = max(worst, c / bound)
                violations += c > bound
    return violations == 0, f"{violations} violations; worst count/bound {worst:.3f}", {
        "violations": int(violations), "worst_fraction": worst}


def _cube_groups(ctx):
    F = ctx.random_smooth(ctx.cfg.cubes_trials, 4)
    groups = []
    for t in ctx.cfg.cubes_t:
        fam = cube_family(ctx.op.grid, t)
        for i in range(F.shape[1]):
            recs = cube_oscillations(fam, ctx.op, F[:, i], ctx.cfg.cubes_k_max)
            groups.append(({"t": repr(float(t)), "trial": i}, recs))
    return groups


def _check_cubes(ctx):
    groups = _cube_groups(ctx)
    ctx.cube_groups = groups
    ratios = [r.ratio for _, recs in groups for r in recs]
    worst = max(ratios)
    bad = sum(r > 1.0 for r in ratios)
    return bad == 0, f"{bad} violations over {len(ratios)} (j, k); worst lhs/bound {worst:.3f}", {
        "violations": int(bad), "worst_ratio": worst, "records": len(ratios)}


def _check_controllalpha(ctx):
    data, ok, parts = {}, True, []
    for a, ch in ctx.chains.items():
        excess = float(np.max(ch.I_A - ch.C4_hat * ch.seminorm))
        good = math.isfinite(ch.C4_hat) and excess <= 0
        ok &= good
        data[repr(a)] = {"C4_hat": ch.C4_hat, "c_prime_hat": ch.c_prime_hat, "A": ch.A,
                         "max_excess": excess}
        parts.append(f"alpha={a:g}: C4_hat = {ch.C4_hat:.4g}, c' = {ch.c_prime_hat:.4g}")
    return ok, "; ".join(parts), data


def _check_chain(ctx):
    data, ok, parts = {}, True, []
    for a, ch in ctx.chains.items():
        good = ch.lambda_chain > 0 and ch.violations == 0 and ch.lambda_chain <= ch.lambda_empirical
        ok &= good
        data[repr(a)] = {"lambda_alpha_chain": ch.lambda_chain,
                         "lambda_alpha_empirical": ch.lambda_empirical, "violations": ch.violations}
        parts.append(f"alpha={a:g}: chain {ch.lambda_chain:.4g} <= empirical "
                     f"{ch.lambda_empirical:.4g}, {ch.violations} violations")
    return ok, "; ".join(parts), data


def _delta_for(ctx, a):
    return ctx.chains[a].c_prime_hat if ctx.cfg.delta == "chain" else float(ctx.cfg.delta)


def _check_fractional(ctx):
    data, ok, parts = {}, True, []
    ctx.fractional = {}
    for a in ctx.cfg.alpha:
        cand = ctx.chains[a].lambda_chain
        res = verify_fractional_poincare(ctx.op, a, _delta_for(ctx, a), cand, ctx.trials,
                                         jobs=ctx.cfg.jobs)
        ctx.fractional[a] = res
        ok &= res.passed
        data[repr(a)] = {"delta": res.delta, "min_ratio": res.min_ratio, "argmin": res.argmin,
                         "candidate": cand, "untempered_min_ratio": res.untempered_min_ratio}
        parts.append(f"alpha={a:g}: min ratio {res.min_ratio:.4g} ({res.argmin}) vs {cand:.4g}")
    return ok, "; ".join(parts), data


def _check_limit(ctx):
    x = ctx.op.grid.nodes
    sigma = math.sqrt(float(ctx.op.masses @ np.sum(x * x, axis=1)) / ctx.op.dim)
    f = np.exp(-np.sum((x - 0.3 * sigma) ** 2, axis=1) / (2 * sigma ** 2))
    vals = classical_limit(ctx.op, f)
    msg = ", ".join(f"alpha={a:g}: {v:.4f}" for a, v in vals.items())
    return None, f"(2 - alpha) G / (sigma_(n-1) E) = {msg}; limit 1/n = {1 / ctx.op.dim:g}", {
        repr(a): v for a, v in vals.items()}


_RUNNERS = {
    "classical": _check_classical,
    "improved": _check_improved,
    "quadratic": _check_quadratic,
    "monotone": _check_monotone,
    "gaffney": _check_gaffney,
    "covering": _check_covering,
    "cubes": _check_cubes,
    "controllalpha": _check_controllalpha,
    "chain": _check_chain,
    "fractional": _check_fractional,
    "limit": _check_limit,
}


def _write_constants(ctx, path):
    rows = []
    if "lam" in ctx.__dict__:
        rows.append(("", "lambda_hat", ctx.lam, "dense eigensolve"))
    if "lam_prime" in ctx.__dict__:
        rows.append(("", "lambda_prime_hat", ctx.lam_prime, "mean-zero pencil eigensolve"))
    if "fits" in ctx.__dict__:
        rows.append(("", "C1_hat", ctx.c1, "fitted: Gaffney decay, 8-envelope"))
    if "chains" in ctx.__dict__:
        for a, ch in ctx.chains.items():
            rows += [(a, "A", ch.A, "smallest power of 2 with eps <= lambda'^(alpha/2)/2"
                      if ctx.cfg.A == "auto" else "configured"),
                     (a, "eps", ch.eps, "closed form"),
                     (a, "C3", ch.C3, "closed form 1/C(alpha)"),
                     (a, "C4_hat", ch.C4_hat, "fitted: trial-set envelope"),
                     (a, "c_prime_hat", ch.c_prime_hat, "fitted: C1_hat / sqrt(n A)"),
                     (a, "lambda_alpha_chain", ch.lambda_chain, "assembled"),
                     (a, "lambda_alpha_empirical", ch.lambda_empirical, "trial-set minimum")]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "name", "value", "provenance"])
        for a, name, v, prov in rows:
            w.writerow([repr(float(a)) if a != "" else "", name, repr(float(v)), prov])


def _write_trials(ctx, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "delta", "trial", "lhs", "rhs", "ratio", "candidate", "I_A"])
        chains = ctx.__dict__.get("chains", {})
        for a, res in getattr(ctx, "fractional", {}).items():
            I_A = chains[a].I_A if a in chains else [float("nan")] * len(res.lhs)
            for name, l, r, i in zip(ctx.trials.names, res.lhs, res.rhs, I_A):
                w.writerow([repr(float(a)), repr(float(res.delta)), name, repr(float(l)), repr(float(r)),
                            repr(float(l / r)), repr(float(res.candidate)), repr(float(i))])


def _write_report(ctx, results, path):
    report = {"config": ctx.cfg.to_dict(), "checks": {}}
    for r in results:
        report["checks"][r.name] = {"status": r.status, "message": r.message,
                                    "data": _jsonable(r.data)}
    report["config"].pop("out")
    report["config"].pop("jobs")
    if all(k in ctx.__dict__ for k in ("lam", "lam_prime", "chains")):
        rep = InequalityReport(ctx.cfg.weight, ctx.cfg.dim, ctx.cfg.points, float(ctx.cfg.half_width),
                               ctx.lam, ctx.lam_prime, ground_state_bound(ctx.op, ctx.lam)[0],
                               list(ctx.chains.values()), list(getattr(ctx, "fractional", {}).values()),
                               ctx.trials.names)
        report["constants"] = _jsonable(rep.to_dict())
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run(cfg, out=None, log=None):
    """Run the enabled checks of cfg and write the artifacts into out (default cfg.out)."""
    errors = validate(cfg)
    if errors:
        raise ConfigError(errors)
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = _Context(cfg)
    started = datetime.now(timezone.utc).isoformat()
    results, timings = [], []
    for name in cfg.enabled:
        t0 = time.perf_counter()
        try:
            ok, msg, data = _RUNNERS[name](ctx)
            status = "diagnostic" if ok is None else ("pass" if ok else "fail")
        except FracPoincareError as exc:
            status, msg, data = "error", f"{type(exc).__name__}: {exc}", {}
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            status, msg, data = "error", f"{type(exc).__name__}: {exc}", {}
        res = CheckResult(name, status, msg, data)
        results.append(res)
        timings.append({"name": name, "status": status, "seconds": round(time.perf_counter() - t0, 3)})
        if log is not None:
            print(f"[{status}] {name}: {msg}", file=log)
    if "fits" in ctx.__dict__:
        write_gaffney_csv(ctx.fits, out / "gaffney.csv")
    else:
        write_gaffney_csv({}, out / "gaffney.csv")
    write_cubes_csv(getattr(ctx, "cube_groups", []), out / "cubes.csv")
    _write_constants(ctx, out / "constants.csv")
    _write_trials(ctx, out / "trials.csv")
    _write_report(ctx, results, out / "report.json")
    manifest = RunManifest(cfg.digest(), __version__, timings, started,
                           datetime.now(timezone.utc).isoformat())
    with open(out / "manifest.json", "w") as fh:
        json.dump({"config_hash": manifest.config_hash, "version": manifest.version,
                   "started": manifest.started, "finished": manifest.finished,
                   "checks": manifest.checks}, fh, indent=2)
        fh.write("\n")
    return manifest, results


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser():
    p = argparse.ArgumentParser(prog="fracpoincare",
                                description="Numerical checks of weighted fractional Poincare inequalities.")
    p.add_argument("--config", default=None,
                   help="TOML config file or bundled name (e.g. examples/gaussian-1d); defaults apply otherwise")
    p.add_argument("--out", default=None, help="output directory (default: config value, else ./out)")
    p.add_argument("--seed", type=int, default=None, help="seed for all random trial sets")
    p.add_argument("--jobs", type=int, default=None, help="worker threads for tiled sums")
    p.add_argument("--only", default=None, help=f"comma-separated subset of: {', '.join(CHECKS)}")
    p.add_argument("--grid-n", type=int, default=None, dest="grid_n", help="grid points per axis")
    p.add_argument("--alpha", type=_floats, default=None, help="comma-separated alpha values")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = with_overrides(cfg, seed=args.seed, jobs=args.jobs, points=args.grid_n, alpha=args.alpha)
        if args.only:
            names = [s.strip() for s in args.only.split(",") if s.strip()]
            unknown = [s for s in names if s not in CHECKS]
            if unknown:
                raise ConfigError([f"--only: unknown check(s) {', '.join(unknown)}"])
            cfg.checks = {c: c in names for c in CHECKS}
        manifest, _ = run(cfg, out=args.out, log=sys.stdout)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    if not manifest.ok:
        for c in manifest.failures():
            print(f"check failed: {c['name']} ({c['status']})", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
