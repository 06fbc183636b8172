"""
Assembling the fractional Poincare constant
===========================================

The constant lambda_alpha is built from four pieces: the improved Poincare
constant lambda', the quadratic-estimate constant C3, a cutoff A with tail
eps(A), and an envelope C4 fitted on trial functions. The resulting value is
certified on every trial and compared with the empirical minimum.

The last part looks at the dyadic cube estimate and shows why the constant
there has to grow with the level k.

Run with:  python demos/03_constant_chain.py
"""

import numpy as np

from fracpoincare import Grid, build_operator, custom, eigendecompose, gaussian
from fracpoincare.harness import (estimate_lambda_prime, fit_constant_chain, make_trial_set,
                                  verify_fractional_poincare)
from fracpoincare.localization import cube_family, cube_oscillations, fit_decay, region_pair

op = build_operator(gaussian(1), Grid(1, 8.0, 321))
dec = eigendecompose(op)
trials = make_trial_set(op, dec, seed=0)
lp = estimate_lambda_prime(op)
fit = fit_decay(op, region_pair(op.grid, [-2, -1], [1, 2]), np.geomspace(0.01, 1, 8))
print(f"lambda' = {lp:.4f}, decay rate C1 = {fit.c1:.4f} (R^2 = {fit.r2:.4f})")

for alpha in (0.5, 1.0, 1.5):
    ch = fit_constant_chain(op, dec, alpha, trials, lp, fit.c1)
    check = verify_fractional_poincare(op, alpha, ch.c_prime_hat, ch.lambda_chain, trials)
    print(f"alpha={alpha}: A={ch.A:g} eps={ch.eps:.3f} C4={ch.C4_hat:.4f} delta={ch.c_prime_hat:.4f}")
    print(f"   chain {ch.lambda_chain:.4f} <= empirical {check.min_ratio:.4f} "
          f"(worst trial {check.argmin}), violations {ch.violations}")

# Cube estimate on a nearly flat weight. For a bump inside the small cube,
# lhs / rhs doubles with each level, so a k-independent constant cannot hold.
# The Cauchy-Schwarz constant grows like 2^k and keeps the bound valid.
V = lambda x: 20 * (np.abs(x[..., 0]) / 16) ** 8
gV = lambda x: 160 * np.sign(x) * np.abs(x) ** 7 / 16 ** 8
lV = lambda x: 1120 * np.abs(x[..., 0]) ** 6 / 16 ** 8
flat = build_operator(custom(V, gV, lV, 1), Grid(1, 16.0, 1281))
x = flat.grid.nodes[:, 0]
fam = cube_family(flat.grid, 0.0625)
j = int(np.argmin(np.abs(fam.centers[:, 0])))
bump = np.exp(-(x - fam.centers[j, 0]) ** 2 / (2 * 0.1 ** 2))
print("bump in Q(x_j, 2 sqrt t), t = 1/16")
for r in cube_oscillations(fam, flat, bump, 5):
    if r.j == j:
        print(f"   k={r.k}: lhs/rhs = {r.lhs / r.rhs:.3f}, lhs/(cbar rhs) = {r.ratio:.3f}")
