import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rtgauge.forms import (
    MatrixForm,
    codiff,
    ext_d,
    inner,
    l2_pair,
    laplacian,
    lp_norm,
    norms,
    pointwise_inverse,
    sup_norm,
    wedge,
)
from rtgauge.grid import Subdomain, build_grid
from rtgauge.synth import sample_connection

E11 = np.array([[1.0, 0.0], [0.0, 0.0]])
E12 = np.array([[0.0, 1.0], [0.0, 0.0]])
E21 = np.array([[0.0, 0.0], [1.0, 0.0]])
E22 = np.array([[0.0, 0.0], [0.0, 1.0]])


def random_form(grid, k, N=2, seed=0):
    rng = np.random.default_rng(seed)
    return MatrixForm(grid, k, {c: rng.standard_normal(grid.cell_shape(c) + (N, N)) for c in grid.cells(k)})


def compact_zero_form(grid, N=2, seed=0):
    f = random_form(grid, 0, N, seed)
    f.values[grid.boundary_mask] = 0.0
    return f


def naive_d0(u, h):
    """Loop oracle for the coboundary of a 2D 0-form."""
    m0, m1 = u.shape[:2]
    e0 = np.zeros((m0 - 1, m1) + u.shape[2:])
    e1 = np.zeros((m0, m1 - 1) + u.shape[2:])
    for i in range(m0):
        for j in range(m1):
            if i + 1 < m0:
                e0[i, j] = (u[i + 1, j] - u[i, j]) / h
            if j + 1 < m1:
                e1[i, j] = (u[i, j + 1] - u[i, j]) / h
    return e0, e1


def d0_matrix(grid):
    """Dense matrix of d on scalar 0-forms, built column by column."""
    cols = []
    for idx in range(grid.num_vertices):
        e = np.zeros(grid.num_vertices)
        e[idx] = 1.0
        d = ext_d(MatrixForm.from_vertex_values(grid, e.reshape(grid.shape)))
        cols.append(np.concatenate([d[c].ravel() for c in grid.cells(1)]))
    return np.array(cols).T


# -- exterior derivative ------------------------------------------------------

def test_d_of_linear_function_on_3x3():
    g = build_grid(2, 3)
    x = g.vertices()
    u = MatrixForm.from_vertex_values(g, x[..., 0][..., None, None] * E11)
    du = ext_d(u)
    np.testing.assert_array_equal(du[(0,)], np.broadcast_to(E11, (2, 3, 2, 2)))
    np.testing.assert_array_equal(du[(1,)], 0.0)


def test_d_matches_loop_oracle():
    g = build_grid(2, 7)
    u = random_form(g, 0, 3, seed=4)
    e0, e1 = naive_d0(u.values, g.h)
    du = ext_d(u)
    np.testing.assert_allclose(du[(0,)], e0, rtol=1e-14, atol=1e-13)
    np.testing.assert_allclose(du[(1,)], e1, rtol=1e-14, atol=1e-13)


def test_d_of_constant_is_zero():
    g = build_grid(2, 9)
    assert ext_d(MatrixForm.constant(g, 0, 3.0 * E12)).max_abs() == 0.0


@pytest.mark.parametrize("n,k", [(2, 0), (3, 0), (3, 1)])
def test_d_squared_is_zero(n, k):
    g = build_grid(n, 9)
    w = random_form(g, k, seed=k + n)
    assert ext_d(ext_d(w)).max_abs() * g.h ** 2 <= 1e-12


def test_d_top_degree_is_error():
    with pytest.raises(ValueError):
        ext_d(random_form(build_grid(2, 5), 2))


# -- co-derivative --------------------------------------------------------------

def test_codiff_is_negative_transpose_of_d():
    g = build_grid(2, 6)
    D = d0_matrix(g)
    om = random_form(g, 1, 1, seed=3)
    flat = np.concatenate([om[c][..., 0, 0].ravel() for c in g.cells(1)])
    np.testing.assert_allclose(codiff(om).values[..., 0, 0].ravel(), -D.T @ flat, atol=1e-12)


def test_codiff_of_x1_dx1():
    # -d^T of the edge values x^1 gives the forward quotient +1 inside
    g = build_grid(2, 5)
    A = MatrixForm(g, 1, {(0,): g.cell_centers((0,))[..., 0][..., None, None] * E11,
                          (1,): np.zeros(g.cell_shape((1,)) + (2, 2))})
    dA = codiff(A).values
    np.testing.assert_allclose(dA[1:-1, :], np.broadcast_to(E11, (3, 5, 2, 2)), atol=1e-14)
    np.testing.assert_allclose(dA[0, :, 0, 0], 0.5)
    np.testing.assert_allclose(dA[-1, :, 0, 0], -3.5)


def test_codiff_of_constant_vanishes_inside():
    g = build_grid(2, 9)
    r = codiff(MatrixForm.constant(g, 1, E12 + E21)).values
    assert np.max(np.abs(r[1:-1, 1:-1])) == 0.0


def test_codiff_of_zero_form_is_error():
    with pytest.raises(ValueError):
        codiff(random_form(build_grid(2, 5), 0))


@settings(max_examples=25, deadline=None)
@given(m=st.integers(4, 12), seed=st.integers(0, 2 ** 16), n=st.sampled_from([2, 3]))
def test_adjointness(m, seed, n):
    g = build_grid(n, m)
    u = compact_zero_form(g, seed=seed)
    om = random_form(g, 1, seed=seed + 1)
    du = ext_d(u)
    scale = math.sqrt(l2_pair(du, du) * l2_pair(om, om))
    assert abs(l2_pair(du, om) + l2_pair(u, codiff(om))) <= 1e-12 * scale


def test_adjointness_degree_two():
    g = build_grid(3, 7)
    a = random_form(g, 1, seed=1)
    for c in g.cells(1):
        for ax in range(3):
            sl = [slice(None)] * 3
            for side in (0, -1):
                if ax not in c:
                    sl[ax] = side
                    a.comps[c][tuple(sl)] = 0.0
                    sl[ax] = slice(None)
    b = random_form(g, 2, seed=2)
    da = ext_d(a)
    scale = math.sqrt(l2_pair(da, da) * l2_pair(b, b))
    assert abs(l2_pair(da, b) + l2_pair(a, codiff(b))) <= 1e-12 * scale


# -- Laplacian -------------------------------------------------------------------

def test_laplacian_of_constant_and_quadratic():
    g = build_grid(2, 9)
    assert np.max(np.abs(laplacian(MatrixForm.constant(g, 0, E12)).values[1:-1, 1:-1])) == 0.0
    x = g.vertices()
    q = laplacian(MatrixForm.from_vertex_values(g, x[..., 0] ** 2)).values[1:-1, 1:-1, 0, 0]
    np.testing.assert_allclose(q, 2.0, atol=1e-10)


def test_laplacian_of_one_form_converges_at_second_order():
    def field(x):
        return np.stack([np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1]),
                         np.cos(np.pi * x[..., 0]) * np.sin(2 * x[..., 1])], axis=-1)[..., None, None]

    def exact(X, a):
        if a == 0:
            return -2 * np.pi ** 2 * np.sin(np.pi * X[..., 0]) * np.sin(np.pi * X[..., 1])
        return -(np.pi ** 2 + 4) * np.cos(np.pi * X[..., 0]) * np.sin(2 * X[..., 1])

    errs = []
    for m in (17, 33):
        g = build_grid(2, m)
        L = laplacian(sample_connection(g, field))
        errs.append(max(np.max(np.abs(L[c][2:-2, 2:-2, 0, 0] - exact(g.cell_centers(c), a)[2:-2, 2:-2]))
                        for a, c in enumerate(g.cells(1))))
    assert 1.8 <= math.log2(errs[0] / errs[1]) <= 2.2


def test_laplacian_degree_two_is_error():
    with pytest.raises(ValueError):
        laplacian(random_form(build_grid(2, 5), 2))


# -- wedge and inner ---------------------------------------------------------------

def test_wedge_scalar_fibres():
    g = build_grid(2, 5)
    f = MatrixForm.constant(g, 1, {(0,): [[2.0]], (1,): [[0.0]]})
    u = MatrixForm.constant(g, 1, {(0,): [[0.0]], (1,): [[3.0]]})
    np.testing.assert_allclose(wedge(f, u)[(0, 1)], 6.0)


def test_wedge_matrix_order_matters():
    g = build_grid(2, 5)
    om = MatrixForm.constant(g, 1, {(0,): E12, (1,): 0 * E12})
    u = MatrixForm.constant(g, 1, {(0,): 0 * E21, (1,): E21})
    np.testing.assert_allclose(wedge(om, u)[(0, 1)], np.broadcast_to(E11, (4, 4, 2, 2)))
    A = MatrixForm.constant(g, 1, {(0,): E12, (1,): E21})
    np.testing.assert_allclose(wedge(A, A)[(0, 1)], np.broadcast_to(E11 - E22, (4, 4, 2, 2)))


def test_wedge_degree_overflow_and_mismatch():
    g = build_grid(2, 5)
    with pytest.raises(ValueError):
        wedge(random_form(g, 1), random_form(g, 2))
    with pytest.raises(ValueError):
        wedge(random_form(g, 1, N=2), random_form(g, 1, N=3))


def test_wedge_first_order_consistent():
    def a_fn(x):
        return np.stack([np.sin(x[..., 1])[..., None, None] * E12, np.cos(x[..., 0])[..., None, None] * E21], axis=-3)

    def exact(X):
        # a_0 a_1 - a_1 a_0
        return (np.sin(X[..., 1]) * np.cos(X[..., 0]))[..., None, None] * (E11 - E22)

    errs = []
    for m in (17, 33, 65):
        g = build_grid(2, m)
        A = sample_connection(g, a_fn)
        errs.append(np.max(np.abs(wedge(A, A)[(0, 1)] - exact(g.cell_centers((0, 1))))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.9)


def test_inner_single_term():
    g = build_grid(2, 5)
    a = MatrixForm.constant(g, 1, {(0,): E12, (1,): 0 * E12})
    b = MatrixForm.constant(g, 1, {(0,): E21, (1,): 0 * E21})
    np.testing.assert_allclose(inner(a, b).values[1:-1], np.broadcast_to(E11, (3, 5, 2, 2)))


def test_inner_multiplication_rules():
    g = build_grid(2, 7)
    om, u = random_form(g, 1, seed=1), random_form(g, 1, seed=2)
    U = np.random.default_rng(3).standard_normal((2, 2))
    base = inner(om, u).values
    np.testing.assert_allclose(U @ base, inner(om.lmul(U), u).values, atol=1e-12)
    np.testing.assert_allclose(inner(om.rmul(U), u).values, inner(om, u.lmul(U)).values, atol=1e-12)
    np.testing.assert_allclose(inner(om, u.rmul(U)).values, base @ U, atol=1e-12)


def test_inner_degree_mismatch():
    g = build_grid(2, 5)
    with pytest.raises(ValueError):
        inner(random_form(g, 0), random_form(g, 1))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 16))
def test_inner_trace_nonnegative_scalar(seed):
    g = build_grid(2, 5)
    om = random_form(g, 1, N=1, seed=seed)
    assert np.all(inner(om, om).values >= 0.0)


# -- pairing and norms -----------------------------------------------------------

def test_l2_pair_of_constant_is_vertex_riemann_sum():
    m = 17
    g = build_grid(2, m)
    c = MatrixForm.constant(g, 0, E11)
    assert l2_pair(c, c) == pytest.approx((m / (m - 1)) ** 2, rel=1e-14)
    assert norms(c, 2).lp == pytest.approx(m / (m - 1), rel=1e-14)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 16), k=st.sampled_from([0, 1, 2]))
def test_l2_pair_positive_definite(seed, k):
    g = build_grid(2, 5)
    om = random_form(g, k, seed=seed)
    assert l2_pair(om, om) > 0
    assert l2_pair(om * 0, om * 0) == 0.0


@pytest.mark.parametrize("k", [0, 1, 2])
def test_norms_of_zero_form(k):
    r = norms(MatrixForm.zeros(build_grid(2, 9), k, 2), 4)
    assert (r.lp, r.w1p, r.combo) == (0.0, 0.0, 0.0)


def test_norms_reject_small_p():
    with pytest.raises(ValueError):
        norms(random_form(build_grid(2, 5), 0), 0.5)


def test_lp_rescaling_law():
    # ||A(x')||_{L^p(unit)} = eps^{-n/p} ||A||_{L^p(sub-box of size eps)}
    eps, p, m = 0.5, 4.0, 33

    def bump(x):
        return np.exp(-np.sum((x - 0.5) ** 2, axis=-1) / 0.02)[..., None, None] * E12

    small = build_grid(2, m, [(0.25, 0.75)] * 2)
    unit = build_grid(2, m)
    A_small = MatrixForm.from_vertex_values(small, bump(small.vertices()))
    A_unit = MatrixForm.from_vertex_values(unit, bump(0.25 + eps * unit.vertices()))
    assert lp_norm(A_unit, p) == pytest.approx(eps ** (-2 / p) * lp_norm(A_small, p), rel=1e-12)


def test_region_restriction_monotone():
    g = build_grid(2, 17)
    om = random_form(g, 1, seed=5)
    assert lp_norm(om, 4, Subdomain(g, 3)) <= lp_norm(om, 4, Subdomain(g, 1)) <= lp_norm(om, 4)
    assert sup_norm(om, Subdomain(g, 2)) <= sup_norm(om)


# -- product rules ---------------------------------------------------------------

def _smooth_zero_form(g, N=2):
    x = g.vertices()
    return MatrixForm(g, 0, {(): np.sin(x[..., 0] + x[..., 1])[..., None, None] * np.eye(N)
                                   + np.cos(3 * x[..., 1])[..., None, None] * np.ones((N, N))})


def test_d_leibniz_zero_one_is_exact():
    g = build_grid(2, 33)
    F = _smooth_zero_form(g)
    u = random_form(g, 1, seed=9)
    err = ext_d(wedge(F, u)) - wedge(ext_d(F), u) - wedge(F, ext_d(u))
    assert err.max_abs() <= 1e-10


def test_d_leibniz_one_one_is_exact_in_3d():
    g = build_grid(3, 9)
    w, u = random_form(g, 1, seed=1), random_form(g, 1, seed=2)
    err = ext_d(wedge(w, u)) - wedge(ext_d(w), u) + wedge(w, ext_d(u))
    assert err.max_abs() <= 1e-10


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 16))
def test_codiff_leibniz_is_exact(seed):
    g = build_grid(2, 9)
    U, w = random_form(g, 0, seed=seed), random_form(g, 1, seed=seed + 1)
    err = codiff(wedge(U, w)) - wedge(U, codiff(w)) - inner(ext_d(U), w)
    assert err.max_abs() <= 1e-10 * max(1.0, codiff(wedge(U, w)).max_abs())


def test_pointwise_inverse():
    g = build_grid(2, 5)
    U = MatrixForm.constant(g, 0, np.eye(2)) + random_form(g, 0, seed=1) * 0.1
    np.testing.assert_allclose(U.values @ pointwise_inverse(U).values, np.broadcast_to(np.eye(2), (5, 5, 2, 2)),
                               atol=1e-13)


def test_dump_csv_round_trip(tmp_path):
    g = build_grid(2, 3)
    om = random_form(g, 1, seed=2)
    path = tmp_path / "form.csv"
    om.dump_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "cell_index,multi_index,row,col,value"
    assert len(lines) == 1 + 2 * 6 * 4
    first = lines[1].split(",")
    assert float(first[-1]) == om[(0,)][0, 0, 0, 0]


def test_form_validation():
    g = build_grid(2, 5)
    with pytest.raises(ValueError):
        MatrixForm(g, 1, {(0,): np.zeros((4, 5, 2, 2))})
    with pytest.raises(ValueError):
        MatrixForm(g, 0, {(): np.zeros((5, 5, 2, 3))})
    with pytest.raises(ValueError):
        random_form(g, 1) + random_form(g, 0)
