"""
Spectral constants of two weights
=================================

The Gaussian weight has the Hermite spectrum 0, 1, 2, ... so the discrete gap
can be checked directly. For the weight exp(-|x|) the continuum gap is 1/4 and
the grid sits at the bottom of the continuous spectrum, so convergence is slow
and we extrapolate in the box size.

Run with:  python demos/01_spectral_constants.py
"""

import numpy as np

from fracpoincare import Grid, build_operator, eigendecompose, exp_power, gaussian
from fracpoincare.harness import ground_state_bound, estimate_lambda, estimate_lambda_prime

# Gaussian: gap, improved constant and the ground-state lower bound
for n in (161, 321, 641):
    op = build_operator(gaussian(1), Grid(1, 8.0, n))
    dec = eigendecompose(op)
    lam = estimate_lambda(dec)
    print(f"gaussian N={n:4d}: lambda = {lam:.8f}, first eigenvalues {np.round(dec.eigenvalues[1:5], 5)}")

op = build_operator(gaussian(1), Grid(1, 8.0, 321))
lam = estimate_lambda(eigendecompose(op))
lp = estimate_lambda_prime(op)
bound, kappa = ground_state_bound(op, lam)
print(f"improved constant lambda' = {lp:.6f}")
print(f"ground-state bound {bound:.6f} at kappa = {kappa:g} (1/7 = {1 / 7:.6f})")

# the linear witness f = x gives <Lf, f> / <(1 + x^2) f, f> = 1 / (1 + 3) = 1/4 >= lambda'
x = op.grid.nodes[:, 0]
witness = op.dirichlet_form(x) / np.sum((1 + x * x) * x * x * op.masses)
print(f"witness f = x: {witness:.6f}")

# exp(-|x|): the gap approaches 1/4 from above as the box grows
gaps = {}
for R, n in ((30.0, 601), (60.0, 1201)):
    op = build_operator(exp_power(1.0, 1), Grid(1, R, n))
    gaps[R] = estimate_lambda(eigendecompose(op))
    print(f"exp_power p=1 R={R:g} N={n}: lambda = {gaps[R]:.6f}")
# the excess decays like R^-2, so one Richardson step in R
print(f"extrapolated gap {(4 * gaps[60.0] - gaps[30.0]) / 3:.4f} (continuum 1/4)")
