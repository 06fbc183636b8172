import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracpoincare import (DomainError, InvalidWeightError, TruncationError, check_alpha_condition,
                          check_assumptionV, custom, evaluate_weight, exp_power, gaussian,
                          normalization_constant, weight_from_string)


def test_gaussian_origin():
    M, g, lap, under = evaluate_weight(gaussian(1), 0.0)
    assert M == 1.0 and g[0] == 0.0 and lap == -1.0 and not under


def test_gaussian_2d_point():
    M, g, lap, _ = evaluate_weight(gaussian(2), [1.0, 1.0])
    assert M == pytest.approx(math.exp(-1))
    np.testing.assert_allclose(g, [-1.0, -1.0])
    assert lap == -2.0


def test_exp_power_away_from_origin():
    M, g, lap, _ = evaluate_weight(exp_power(1.0), 3.0)
    assert M == pytest.approx(math.exp(-3))
    assert g[0] == -1.0 and lap == 0.0


def test_underflow_is_flagged_not_raised():
    res = evaluate_weight(gaussian(1), 100.0)
    assert res.M == 0.0 and res.underflow


def test_nan_custom_weight_rejected():
    spec = custom(lambda x: np.nan * x[..., 0], lambda x: x, lambda x: 1.0)
    with pytest.raises(InvalidWeightError):
        evaluate_weight(spec, 0.5)


@pytest.mark.parametrize("spec", [gaussian(1), gaussian(2), exp_power(1.0), exp_power(1.5, 2),
                                  exp_power(3.0, 2)])
def test_evaluators_consistent_with_finite_differences(spec, rng):
    # avoid the origin, where p < 2 has a Laplacian singularity
    x = rng.uniform(0.5, 3.0, size=(100, spec.dim)) * rng.choice([-1, 1], size=(100, spec.dim))
    h = 1e-4
    g = spec.grad_V(x)
    lap = spec.lap_V(x)
    fd_lap = np.zeros(len(x))
    for d in range(spec.dim):
        e = np.zeros(spec.dim)
        e[d] = h
        fd = (spec.V(x + e) - spec.V(x - e)) / (2 * h)
        np.testing.assert_allclose(fd, g[:, d], rtol=1e-6, atol=1e-7)
        fd_lap += (spec.grad_V(x + e)[:, d] - spec.grad_V(x - e)[:, d]) / (2 * h)
    np.testing.assert_allclose(fd_lap, lap, rtol=1e-6, atol=1e-6)


def test_assumptionV_examples():
    assert check_assumptionV(gaussian(1), 0.5, 1.0, 2.0).satisfied
    assert check_assumptionV(exp_power(1.0), 0.5, 0.25, 1.0).satisfied
    rep = check_assumptionV(gaussian(1), 0.5, 3.0, 2.0)
    assert not rep.satisfied
    assert rep.margin_profile[0] == (2.0, pytest.approx(1.0))


def test_assumptionV_box_smaller_than_R():
    with pytest.raises(DomainError):
        check_assumptionV(gaussian(1), 0.5, 1.0, 2.0, box=1.0)


@settings(max_examples=25, deadline=None)
@given(c=st.floats(0.05, 5.0), frac=st.floats(0.01, 0.99))
def test_assumptionV_monotone_in_c(c, frac):
    if check_assumptionV(gaussian(2), 0.5, c, 2.0, n_radii=8, n_dirs=8).satisfied:
        assert check_assumptionV(gaussian(2), 0.5, c * frac, 2.0, n_radii=8, n_dirs=8).satisfied


def test_alpha_condition_examples():
    rep = check_alpha_condition(gaussian(1), 0.5)
    assert rep.satisfied
    assert dict(rep.margin_profile)[4.0] == pytest.approx(3.0)
    radii = [r for r, _ in rep.margin_profile]
    assert all(np.diff(radii) > 0)
    rep = check_alpha_condition(exp_power(1.0), 0.5)
    assert not rep.satisfied
    assert all(m == pytest.approx(0.25) for _, m in rep.margin_profile)


def test_alpha_condition_quadratic_growth_for_p2():
    prof = check_alpha_condition(exp_power(2.0), 0.5).margin_profile
    # (1/4)(2r)^2 - 2 = r^2 - 2
    for r, m in prof:
        assert m == pytest.approx(r * r - 2.0)


def test_normalization_gaussian_1d():
    res = normalization_constant(gaussian(1), 8.0)
    assert res.value == pytest.approx(math.sqrt(2 * math.pi), rel=1e-8)


def test_normalization_exp_power():
    assert normalization_constant(exp_power(1.0), 30.0).value == pytest.approx(2.0, rel=1e-8)


def test_normalization_gaussian_2d():
    assert normalization_constant(gaussian(2), 8.0).value == pytest.approx(2 * math.pi, rel=1e-6)


def test_normalization_order_doubling():
    a = normalization_constant(exp_power(1.5), 20.0, order=16)
    b = normalization_constant(exp_power(1.5), 20.0, order=32)
    assert abs(a.value - b.value) <= max(a.rel_error, 1e-12) * a.value + 1e-12


def test_normalization_truncation_error_suggests_box():
    with pytest.raises(TruncationError) as info:
        normalization_constant(gaussian(1), 3.0)
    assert info.value.suggested_box > 3.0


def test_weight_from_string(tmp_path):
    assert weight_from_string("gaussian").family == "gaussian"
    assert weight_from_string("exp-power:1.5").exponent == 1.5
    path = tmp_path / "w.py"
    path.write_text("import numpy as np\n"
                    "def V(x): return np.sum(x**4, axis=-1)\n"
                    "def grad_V(x): return 4*x**3\n"
                    "def lap_V(x): return np.sum(12*x**2, axis=-1)\n")
    spec = weight_from_string(f"custom:{path}")
    assert spec.family == "custom"
    assert evaluate_weight(spec, 1.0).M == pytest.approx(math.exp(-1))
    with pytest.raises(ValueError):
        weight_from_string("cauchy")
