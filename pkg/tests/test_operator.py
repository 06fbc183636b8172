import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fracpoincare import (DomainError, Grid, SolverError, TruncationError, build_operator,
                          eigendecompose, exp_power, gaussian, m_inner_product, m_norm,
                          project_mean_zero, resolvent_apply)
from fracpoincare.operator import read_triplets, write_triplets


def _edge_form(op, f, g):
    """Independent evaluation of sum_edges M_edge (f_i - f_j)(g_i - g_j) h^{n-2}."""
    h = op.grid.h
    i, j = op.edge_i, op.edge_j
    return float(np.sum(op.edge_weights * (f[i] - f[j]) * (g[i] - g[j]))) * h ** (op.dim - 2)


def test_grid_shape_and_spacing():
    g = Grid(2, 4.0, 17)
    assert g.h == pytest.approx(0.5)
    assert g.size == 289 and g.nodes.shape == (289, 2)
    assert len({tuple(p) for p in g.nodes}) == g.size


def test_grid_rejects_bad_parameters():
    with pytest.raises(DomainError):
        Grid(1, 8.0, 8)
    with pytest.raises(DomainError, match="points <= 316"):
        Grid(2, 8.0, 400)
    with pytest.raises(DomainError):
        Grid(3, 8.0, 20)


def test_truncation_error():
    with pytest.raises(TruncationError):
        build_operator(gaussian(1), Grid(1, 3.0, 65))


@pytest.mark.parametrize("fixture", ["gauss_op", "gauss2_op", "exp1_op"])
def test_operator_invariants(fixture, request, rng):
    op = request.getfixturevalue(fixture)
    f, g = rng.normal(size=(2, op.size))
    Lf, Lg = op.matvec(f), op.matvec(g)
    a, b = m_inner_product(op, Lf, g), m_inner_product(op, f, Lg)
    assert abs(a - b) <= 1e-12 * max(abs(a), abs(b))
    assert m_inner_product(op, Lf, f) >= 0
    assert m_norm(op, op.matvec(np.ones(op.size))) == 0.0
    e = _edge_form(op, f, g)
    assert a == pytest.approx(e, rel=1e-12)
    assert op.dirichlet_form(f, g) == pytest.approx(e, rel=1e-12)


def test_masses_and_moments(gauss_op):
    x = gauss_op.grid.nodes[:, 0]
    one = np.ones_like(x)
    assert m_inner_product(gauss_op, one, one) == pytest.approx(1.0, abs=1e-12)
    assert abs(m_inner_product(gauss_op, one, x)) < 1e-10
    # second moment of the standard Gaussian
    assert m_inner_product(gauss_op, x, x) == pytest.approx(1.0, abs=1e-4)


def test_project_mean_zero(gauss_op, rng):
    x = gauss_op.grid.nodes[:, 0]
    assert np.all(project_mean_zero(gauss_op, np.ones_like(x)) == 0)
    f0 = project_mean_zero(gauss_op, rng.normal(size=x.size))
    np.testing.assert_allclose(project_mean_zero(gauss_op, f0), f0, atol=1e-12)
    np.testing.assert_allclose(project_mean_zero(gauss_op, x ** 2), x ** 2 - 1, atol=1e-3)


def test_resolvent_of_constant_and_eigenvector(gauss_op, gauss_dec):
    one = np.ones(gauss_op.size)
    np.testing.assert_allclose(resolvent_apply(gauss_op, 3.0, one), one, rtol=1e-12)
    for k in (1, 4):
        phi, lam = gauss_dec.eigenvectors[:, k], gauss_dec.eigenvalues[k]
        for t in (0.1, 2.0):
            u = resolvent_apply(gauss_op, t, phi)
            assert m_norm(gauss_op, u - phi / (1 + t * lam)) < 1e-9


@pytest.mark.parametrize("solver", ["direct", "cg"])
def test_resolvent_residual_and_contraction(gauss_op, rng, solver):
    for t in (0.01, 0.1, 1.0, 10.0):
        F = rng.normal(size=(gauss_op.size, 25))
        U = resolvent_apply(gauss_op, t, F, solver=solver)
        R = F - U - t * gauss_op.matvec(U)
        assert np.all(m_norm(gauss_op, R) <= 1e-10 * m_norm(gauss_op, F))
        assert np.all(m_norm(gauss_op, U) <= m_norm(gauss_op, F) * (1 + 1e-12))
        assert np.all(m_norm(gauss_op, t * gauss_op.matvec(U)) <= m_norm(gauss_op, F) * (1 + 1e-12))


def test_resolvent_identity(gauss_op, rng):
    f = rng.normal(size=gauss_op.size)
    t, s = 0.3, 2.5
    lhs = resolvent_apply(gauss_op, t, f) - resolvent_apply(gauss_op, s, f)
    rhs = (s - t) * gauss_op.matvec(resolvent_apply(gauss_op, t, resolvent_apply(gauss_op, s, f)))
    assert m_norm(gauss_op, lhs - rhs) <= 1e-8 * m_norm(gauss_op, lhs)


def test_cg_iteration_cap_raises(gauss_op, rng):
    with pytest.raises(SolverError):
        resolvent_apply(gauss_op, 100.0, rng.normal(size=gauss_op.size), solver="cg", maxiter=2)


def test_gaussian_gap(gauss_dec):
    assert gauss_dec.eigenvalues[0] == 0.0
    assert 0.98 <= gauss_dec.gap <= 1.02


def test_gap_second_order_convergence():
    gaps = [eigendecompose(build_operator(gaussian(1), Grid(1, 8.0, n))).gap for n in (81, 161, 321)]
    errs = [abs(g - 1.0) for g in gaps]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.8)


def test_exp_power_gap_box_extrapolation(exp1_dec):
    # continuum gap of exp(-|x|) is 1/4; the truncated box adds an O(R^-2) shift
    g30 = exp1_dec.gap
    g60 = eigendecompose(build_operator(exp_power(1.0), Grid(1, 60.0, 1201))).gap
    extrapolated = (4 * g60 - g30) / 3
    assert extrapolated == pytest.approx(0.25, rel=0.02)
    assert g30 == pytest.approx(0.2597, abs=1e-3)


def test_triplet_roundtrip(tmp_path, gauss2_op):
    path = tmp_path / "L.txt"
    write_triplets(gauss2_op, path)
    A = read_triplets(path)
    assert (abs(A - gauss2_op.matrix)).max() == 0.0
    assert path.read_text().splitlines()[2].startswith("# shape=1681 1681")


_ENTRIES = st.one_of(st.just(0.0), st.floats(1e-6, 1e3), st.floats(-1e3, -1e-6))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 33, elements=_ENTRIES), arrays(np.float64, 33, elements=_ENTRIES))
def test_self_adjoint_property(f, g):
    op = _small_op()
    a = m_inner_product(op, op.matvec(f), g)
    b = m_inner_product(op, f, op.matvec(g))
    scale = op.spectral_bounds[1] * m_norm(op, f) * m_norm(op, g)
    assert abs(a - b) <= 1e-12 * scale
    assert op.dirichlet_form(f) >= 0


_SMALL = {}


def _small_op():
    if "op" not in _SMALL:
        _SMALL["op"] = build_operator(gaussian(1), Grid(1, 7.0, 33))
    return _SMALL["op"]
