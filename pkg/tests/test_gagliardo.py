import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracpoincare import Grid, build_operator, gaussian
from fracpoincare.gagliardo import (gagliardo_seminorm, lattice_zeta, symmetric_gagliardo,
                                    weighted_moment)

# f = tanh(2x) under the normalised Gaussian with x, y in [-8, 8], from nested
# adaptive quadrature of the double integral
TANH_ORACLE = {
    (0.5, 0.0): 4.798642351749909,
    (1.0, 0.0): 4.098179846628695,
    (1.5, 0.0): 5.368003624845867,
    (0.5, 1.0): 1.0770831663618035,
    (1.0, 1.0): 1.4981349023733757,
    (1.5, 1.0): 3.1765523751460876,
}
# f = 1_{x >= 0}, alpha = 1/2: int M(x) [(-x)^{-a} - (R - x)^{-a}] / a over both half lines
STEP_ORACLE_HALF = 2.7647457336985832


@pytest.fixture(scope="module")
def fine_op():
    return build_operator(gaussian(1), Grid(1, 8.0, 641))


def _x(op):
    return op.grid.nodes[:, 0]


@pytest.mark.parametrize("alpha,delta", sorted(TANH_ORACLE))
def test_tanh_oracle(fine_op, alpha, delta):
    res = gagliardo_seminorm(fine_op, np.tanh(2 * _x(fine_op)), alpha, delta)
    assert res.value == pytest.approx(TANH_ORACLE[alpha, delta], rel=5e-4)
    assert res.quad_error < 1e-2 * res.value


def test_lattice_zeta_values():
    assert lattice_zeta(1, 1.0) == pytest.approx(-1.0)  # 2 zeta(0)
    assert lattice_zeta(1, 3.0) == pytest.approx(math.pi ** 2 / 3)
    # where the lattice sum converges it must match a direct summation
    k = np.arange(-400, 401)
    K1, K2 = np.meshgrid(k, k)
    r2 = (K1 ** 2 + K2 ** 2).astype(float)
    r2[400, 400] = np.inf
    direct = float(np.sum(K1 ** 2 * r2 ** (-(2 + 4.0) / 2)))
    assert lattice_zeta(2, 4.0) == pytest.approx(direct, rel=1e-5)


def test_step_alpha_half_extrapolates(gauss_op, fine_op):
    big = build_operator(gaussian(1), Grid(1, 8.0, 1281))
    vals = [gagliardo_seminorm(op, (_x(op) >= 0).astype(float), 0.5).value for op in (fine_op, big)]
    # the error decays like h^{1/2}
    extrap = vals[1] + (vals[1] - vals[0]) / (math.sqrt(2) - 1)
    assert vals[0] < vals[1] < STEP_ORACLE_HALF
    assert extrap == pytest.approx(STEP_ORACLE_HALF, rel=5e-3)


def test_step_alpha_one_diverges(gauss_op, fine_op):
    vals = [gagliardo_seminorm(op, (_x(op) >= 0).astype(float), 1.0).value for op in (gauss_op, fine_op)]
    # each halving of h adds about 2 M(0) ln 2
    step = 2 * math.log(2) / math.sqrt(2 * math.pi)
    assert vals[1] - vals[0] == pytest.approx(step, rel=0.03)


def test_constant_is_zero(gauss_op):
    for alpha in (0.5, 1.0, 1.5):
        assert gagliardo_seminorm(gauss_op, np.full(gauss_op.size, 2.0), alpha).value == 0


def test_decreasing_in_delta(gauss_op):
    f = np.sin(_x(gauss_op))
    vals = [gagliardo_seminorm(gauss_op, f, 1.0, d).value for d in (0.0, 0.5, 1.0)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_symmetric_dominated(gauss_op, rng):
    F = rng.normal(size=(gauss_op.size, 4))
    sym = symmetric_gagliardo(gauss_op, F, 1.0).value
    non = gagliardo_seminorm(gauss_op, F, 1.0).value
    assert np.all(sym <= gauss_op.weights.max() * non * (1 + 1e-9))


def test_reflection_invariance(gauss_op, rng):
    f = rng.normal(size=gauss_op.size)
    a = gagliardo_seminorm(gauss_op, f, 1.5).value
    b = gagliardo_seminorm(gauss_op, f[::-1].copy(), 1.5).value
    assert b == pytest.approx(a, rel=1e-10)


def test_columns_match_single(gauss_op):
    x = _x(gauss_op)
    F = np.column_stack([np.tanh(x), np.cos(x)])
    res = gagliardo_seminorm(gauss_op, F, 1.0, 0.5)
    for i in range(2):
        assert res.value[i] == pytest.approx(gagliardo_seminorm(gauss_op, F[:, i], 1.0, 0.5).value, rel=1e-12)


def test_jobs_deterministic(gauss_op, rng):
    F = rng.normal(size=(gauss_op.size, 3))
    a = gagliardo_seminorm(gauss_op, F, 1.0, jobs=1).value
    b = gagliardo_seminorm(gauss_op, F, 1.0, jobs=4).value
    assert np.array_equal(a, b)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_refinement(gauss_op, fine_op, alpha):
    f = lambda op: np.exp(-_x(op) ** 2) * np.sin(2 * _x(op))
    a = gagliardo_seminorm(gauss_op, f(gauss_op), alpha).value
    b = gagliardo_seminorm(fine_op, f(fine_op), alpha).value
    assert abs(a - b) <= 0.03 * b


@settings(max_examples=15, deadline=None)
@given(s=st.floats(-0.5, 0.5))
def test_shift_continuity(gauss_op, s):
    x = _x(gauss_op)
    base = gagliardo_seminorm(gauss_op, np.tanh(x), 1.0).value
    moved = gagliardo_seminorm(gauss_op, np.tanh(x - s), 1.0).value
    assert abs(moved - base) <= 2.0 * abs(s) * base + 1e-12


def test_monte_carlo_agrees(gauss_op):
    f = np.tanh(2 * _x(gauss_op))
    exact = gagliardo_seminorm(gauss_op, f, 1.5).value
    mc = gagliardo_seminorm(gauss_op, f, 1.5, backend="mc", mc_samples=400_000, seed=7)
    assert mc.std_error > 0
    assert abs(mc.value - exact) <= 5 * mc.std_error + 0.02 * exact
    again = gagliardo_seminorm(gauss_op, f, 1.5, backend="mc", mc_samples=400_000, seed=7)
    assert again.value == mc.value


@pytest.mark.parametrize("alpha", [0.0, 2.0, 2.5, -1.0])
def test_alpha_out_of_range(gauss_op, alpha):
    with pytest.raises(ValueError):
        gagliardo_seminorm(gauss_op, np.zeros(gauss_op.size), alpha)


def test_negative_delta_rejected(gauss_op):
    with pytest.raises(ValueError):
        gagliardo_seminorm(gauss_op, np.zeros(gauss_op.size), 1.0, -0.1)


def test_moment_gaussian_second_moment(gauss_op):
    # |grad ln M| = |x|, so sum mode at alpha = 2 gives E[1 + x^2] = 2
    assert weighted_moment(gauss_op, np.ones(gauss_op.size), 2.0) == pytest.approx(2.0, abs=1e-3)


def test_moment_single_node(gauss_op):
    f = np.zeros(gauss_op.size)
    i = int(np.argmin(np.abs(_x(gauss_op))))
    f[i] = 1.0
    assert weighted_moment(gauss_op, f, 1.0) == pytest.approx(gauss_op.masses[i], rel=1e-12)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 2.0])
def test_moment_modes_comparable(gauss_op, rng, alpha):
    f = rng.normal(size=gauss_op.size)
    r = weighted_moment(gauss_op, f, alpha, "sum") / weighted_moment(gauss_op, f, alpha, "power")
    assert 0.5 <= r <= 2.0


def test_moment_rejects_bad_input(gauss_op):
    with pytest.raises(ValueError):
        weighted_moment(gauss_op, np.ones(gauss_op.size), 2.5)
    with pytest.raises(ValueError):
        weighted_moment(gauss_op, np.ones(gauss_op.size), 1.0, "cube")
