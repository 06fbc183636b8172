"""
The singular kernel on a grid
=============================

Summing |f(x) - f(y)|^2 |x - y|^{-1-alpha} over distinct nodes misses a
near-diagonal piece of size h^{2-alpha} |f'|^2. The package adds it back with
a lattice zeta constant. This script shows the effect of that correction and
what happens for a jump, where no correction applies.

Run with:  python demos/02_gagliardo_kernel.py
"""

import math

import numpy as np

from fracpoincare import Grid, build_operator, gaussian
from fracpoincare.gagliardo import gagliardo_seminorm, lattice_zeta

# reference values for f = tanh(2x) from nested adaptive quadrature on [-8, 8]^2
reference = {0.5: 4.798642351749909, 1.0: 4.098179846628695, 1.5: 5.368003624845867}

print("smooth f = tanh(2x)")
for alpha, exact in reference.items():
    for n in (161, 321, 641):
        op = build_operator(gaussian(1), Grid(1, 8.0, n))
        f = np.tanh(2 * op.grid.nodes[:, 0])
        res = gagliardo_seminorm(op, f, alpha)
        # undo the correction to see the raw pair sum
        grad2 = np.gradient(f, op.grid.h) ** 2
        raw = res.value + lattice_zeta(1, alpha) * op.grid.h ** (2 - alpha) * float(op.masses @ grad2)
        print(f"  alpha={alpha:3.1f} N={n:4d}: corrected rel err {abs(res.value - exact) / exact:.1e}, "
              f"raw rel err {abs(raw - exact) / exact:.1e}")

# a jump at 0: the seminorm is finite only for alpha < 1
print("step f = 1{x >= 0}")
for alpha in (0.5, 1.0):
    vals = []
    for n in (321, 641, 1281):
        op = build_operator(gaussian(1), Grid(1, 8.0, n))
        vals.append(gagliardo_seminorm(op, (op.grid.nodes[:, 0] >= 0).astype(float), alpha).value)
    print(f"  alpha={alpha}: {np.round(vals, 4)}")
    if alpha == 0.5:
        # error ~ h^{1/2}: extrapolate
        print(f"    extrapolated {vals[2] + (vals[2] - vals[1]) / (math.sqrt(2) - 1):.4f} (exact 2.7647)")
    else:
        # each halving of h adds about 2 M(0) ln 2
        print(f"    increments {np.round(np.diff(vals), 4)}, "
              f"2 M(0) ln 2 = {2 * math.log(2) / math.sqrt(2 * math.pi):.4f}")
