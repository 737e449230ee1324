import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from rtgauge.forms import MatrixForm
from rtgauge.gauge import (
    MembershipError,
    Signature,
    algebra_basis,
    exp_generator,
    group_inverse,
    invert_near_identity,
    is_in_algebra,
    is_in_group,
    w_of,
)
from rtgauge.grid import build_grid

SIGS = [Signature(2, 0), Signature(1, 1), Signature(2, 1), Signature(3, 0), Signature(2, 2)]


def boost(t):
    return np.array([[np.cosh(t), np.sinh(t)], [np.sinh(t), np.cosh(t)]])


def rotation(t):
    return np.array([[np.cos(t), np.sin(t)], [-np.sin(t), np.cos(t)]])


def field(grid, M):
    return MatrixForm.constant(grid, 0, M)


def random_algebra(sig, rng):
    B = algebra_basis(sig)
    return np.einsum("b,bij->ij", rng.standard_normal(len(B)), B)


def test_signature_eta():
    sig = Signature(2, 1)
    np.testing.assert_array_equal(sig.eta, np.diag([1.0, 1.0, -1.0]))
    np.testing.assert_array_equal(sig.eta @ sig.eta, np.eye(3))
    assert sig.N == 3 and not sig.compact
    assert Signature.from_dict(sig.to_dict()) == sig
    with pytest.raises(ValueError):
        sig.eta[0, 0] = 5.0
    with pytest.raises(ValueError):
        Signature(0, 0)


@pytest.mark.parametrize("sig", SIGS)
def test_identity_in_group(sig):
    m = is_in_group(np.eye(sig.N), sig)
    assert m and m.defects == {"metric": 0.0, "det": 0.0}


def test_boost_in_group():
    assert is_in_group(boost(0.3), Signature(1, 1))
    assert not is_in_group(boost(0.3), Signature(2, 0))


def test_twice_identity_not_in_group():
    m = is_in_group(2 * np.eye(2), Signature(2, 0))
    assert not m
    assert m.defects["det"] == pytest.approx(3.0)


def test_reflection_fails_det_only():
    m = is_in_group(np.diag([1.0, -1.0]), Signature(2, 0))
    assert not m
    assert m.defects["metric"] == 0.0 and m.defects["det"] == 2.0


@pytest.mark.parametrize("X,sig", [
    (np.zeros((2, 2)), Signature(2, 0)),
    (np.array([[0.0, 0.7], [0.7, 0.0]]), Signature(1, 1)),
    (np.array([[0.0, 1.0], [-1.0, 0.0]]), Signature(2, 0)),
])
def test_algebra_members(X, sig):
    assert is_in_algebra(X, sig)


def test_algebra_non_members():
    assert not is_in_algebra(np.array([[0.0, 1.0], [1.0, 0.0]]), Signature(2, 0))
    assert not is_in_algebra(np.eye(2), Signature(1, 1))


def test_size_mismatch():
    with pytest.raises(ValueError):
        is_in_group(np.eye(3), Signature(2, 0))
    with pytest.raises(ValueError):
        is_in_algebra(np.eye(2), Signature(2, 1))


@pytest.mark.parametrize("sig", SIGS)
def test_basis_dimension_and_membership(sig):
    B = algebra_basis(sig)
    assert len(B) == sig.N * (sig.N - 1) // 2
    assert is_in_algebra(B, sig, 1e-14)
    assert np.linalg.matrix_rank(B.reshape(len(B), -1)) == len(B)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 16), idx=st.integers(0, len(SIGS) - 1))
def test_algebra_closed_under_commutator(seed, idx):
    sig = SIGS[idx]
    rng = np.random.default_rng(seed)
    X, Y = random_algebra(sig, rng), random_algebra(sig, rng)
    assert is_in_algebra(X @ Y - Y @ X, sig, 1e-10)


def test_w_of_cases():
    g = build_grid(2, 5)
    assert w_of(field(g, np.eye(2)), Signature(2, 0)).max_abs() == 0.0
    assert w_of(field(g, boost(0.8)), Signature(1, 1)).max_abs() <= 1e-12
    c = 0.3
    w = w_of(field(g, (1 + c) * np.eye(2)), Signature(2, 0)).values
    np.testing.assert_allclose(w, np.broadcast_to(((1 + c) ** 2 - 1) * np.eye(2), w.shape), atol=1e-14)


def test_w_of_is_symmetric():
    g = build_grid(2, 5)
    U = MatrixForm(g, 0, {(): np.random.default_rng(0).standard_normal((5, 5, 3, 3))})
    w = w_of(U, Signature(2, 1)).values
    np.testing.assert_array_equal(w, np.swapaxes(w, -1, -2))


def test_group_inverse_closed_forms():
    g = build_grid(2, 5)
    np.testing.assert_allclose(group_inverse(field(g, boost(0.4)), Signature(1, 1)).values,
                               np.broadcast_to(boost(-0.4), (5, 5, 2, 2)), atol=1e-14)
    np.testing.assert_allclose(group_inverse(field(g, rotation(1.1)), Signature(2, 0)).values,
                               np.broadcast_to(rotation(-1.1), (5, 5, 2, 2)), atol=1e-14)
    assert group_inverse(field(g, np.eye(2)), Signature(2, 0)).values.tolist() == field(g, np.eye(2)).values.tolist()


def test_group_inverse_rejects_non_member():
    with pytest.raises(MembershipError):
        group_inverse(field(build_grid(2, 5), 2 * np.eye(2)), Signature(2, 0))


def test_invert_near_identity_cases():
    g = build_grid(2, 5)
    assert invert_near_identity(MatrixForm.zeros(g, 0, 2), 0.3).max_abs() == 0.0
    c, eps = 0.7, 0.4
    u = invert_near_identity(field(g, c * np.eye(2)), eps).values
    np.testing.assert_allclose(u, np.broadcast_to(c / (1 + eps * c) * np.eye(2), u.shape), atol=1e-14)


@pytest.mark.parametrize("size,margin", [(1.2, 1.0), (1.0, 1.0), (0.6, 0.5)])
def test_invert_near_identity_rejects_large(size, margin):
    g = build_grid(2, 5)
    with pytest.raises(MembershipError):
        invert_near_identity(field(g, size * np.eye(2)), 1.0, margin=margin)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 16), eps=st.floats(0.01, 1.0))
def test_invert_near_identity_product(seed, eps):
    g = build_grid(2, 4)
    V = np.random.default_rng(seed).standard_normal((4, 4, 3, 3))
    V *= 0.4 / (eps * np.max(np.linalg.norm(V, 2, axis=(-2, -1))))
    u = invert_near_identity(MatrixForm(g, 0, {(): V}), eps).values
    prod = (np.eye(3) + eps * V) @ (np.eye(3) - eps * u)
    np.testing.assert_allclose(prod, np.broadcast_to(np.eye(3), prod.shape), atol=1e-12)


def test_exp_generator_closed_forms():
    g = build_grid(2, 5)
    theta = MatrixForm.from_vertex_values(g, np.full(g.shape, 0.9))
    R = exp_generator(theta, np.array([[0.0, 1.0], [-1.0, 0.0]]), Signature(2, 0)).values
    np.testing.assert_allclose(R, np.broadcast_to(rotation(0.9), R.shape), atol=1e-14)
    B = exp_generator(theta, np.array([[0.0, 1.0], [1.0, 0.0]]), Signature(1, 1)).values
    np.testing.assert_allclose(B, np.broadcast_to(boost(0.9), B.shape), atol=1e-14)
    zero = MatrixForm.zeros(g, 0, 1)
    assert np.array_equal(exp_generator(zero, np.array([[0.0, 1.0], [1.0, 0.0]]), Signature(1, 1)).values,
                          np.broadcast_to(np.eye(2), (5, 5, 2, 2)))


def test_exp_generator_rejects_non_algebra():
    g = build_grid(2, 5)
    with pytest.raises(MembershipError):
        exp_generator(MatrixForm.zeros(g, 0, 1), np.eye(2), Signature(2, 0))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 16), idx=st.integers(0, len(SIGS) - 1))
def test_exp_generator_group_valued(seed, idx):
    sig = SIGS[idx]
    rng = np.random.default_rng(seed)
    G = random_algebra(sig, rng)
    G /= np.linalg.norm(G)
    g = build_grid(2, 5)
    phi = MatrixForm.from_vertex_values(g, rng.uniform(-1.5, 1.5, g.shape))
    U = exp_generator(phi, G, sig)
    assert w_of(U, sig).max_abs() <= 1e-10
    assert np.max(np.abs(np.linalg.det(U.values) - 1)) <= 1e-10
    # independent oracle: scipy's Pade exponential
    np.testing.assert_allclose(U.values[1, 2], expm(phi.values[1, 2, 0, 0] * G), atol=1e-12)
    np.testing.assert_allclose(group_inverse(group_inverse(U, sig), sig).values, U.values, atol=1e-12)
