import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mamibench.channel import draw_rayleigh
from mamibench.errors import RankDeficient, SingularDiagonal
from mamibench.matrixkit import gram, neumann_inverse, qr_mgs, regularized_pinv


def brute_gram(a):
    rows, cols = a.shape
    out = np.zeros((cols, cols), dtype=complex)
    for j in range(cols):
        for k in range(cols):
            for m in range(rows):
                out[j, k] += np.conj(a[m, j]) * a[m, k]
    return out


def test_gram_identity():
    np.testing.assert_array_equal(gram(np.eye(3)), np.eye(3))


def test_gram_column_vector():
    np.testing.assert_allclose(gram(np.array([[1], [1j]])), [[2]])


def test_gram_matches_triple_loop():
    a = draw_rayleigh(8, 2, seed=11)
    np.testing.assert_allclose(gram(a), brute_gram(a), atol=1e-12)


def test_gram_batched_matches_single():
    a = draw_rayleigh(6, 3, seed=1, batch=(4,))
    g = gram(a)
    for i in range(4):
        np.testing.assert_allclose(g[i], brute_gram(a[i]), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(m=st.integers(1, 32), k=st.integers(1, 8), seed=st.integers(0, 2**31))
def test_gram_hermitian(m, k, seed):
    g = gram(draw_rayleigh(m, k, seed))
    assert np.linalg.norm(g - g.conj().T) <= 1e-12 * np.linalg.norm(g)
    assert np.linalg.eigvalsh(g).min() > -1e-10 * np.linalg.norm(g)


def test_qr_identity():
    f = qr_mgs(np.eye(4))
    np.testing.assert_allclose(f.q, np.eye(4))
    np.testing.assert_allclose(f.r, np.eye(4))


def test_qr_single_column():
    f = qr_mgs(np.array([[3.0], [4.0]]))
    np.testing.assert_allclose(f.q, [[0.6], [0.8]])
    np.testing.assert_allclose(f.r, [[5.0]])


def test_qr_reconstruction_200x12():
    a = draw_rayleigh(200, 12, seed=5)
    f = qr_mgs(a)
    assert np.linalg.norm(a - f.q @ f.r) < 1e-10 * np.linalg.norm(a)


@settings(max_examples=30, deadline=None)
@given(m=st.integers(16, 256), k=st.integers(1, 16), seed=st.integers(0, 2**31))
def test_qr_properties(m, k, seed):
    a = draw_rayleigh(m, k, seed)
    f = qr_mgs(a)
    assert np.linalg.norm(f.q.conj().T @ f.q - np.eye(k)) < 1e-10
    assert np.linalg.norm(a - f.q @ f.r) < 1e-10 * np.linalg.norm(a)
    assert np.allclose(np.tril(f.r, -1), 0)
    d = np.diag(f.r)
    assert np.all(d.real > 0) and np.allclose(d.imag, 0)


def test_qr_rank_deficient():
    a = draw_rayleigh(10, 3, seed=2)
    a[:, 2] = a[:, 0] + 2 * a[:, 1]
    with pytest.raises(RankDeficient):
        qr_mgs(a)


def test_neumann_diagonal_exact_one_term():
    np.testing.assert_allclose(neumann_inverse(np.diag([2.0, 4.0]), 1), np.diag([0.5, 0.25]))


def test_neumann_identity():
    np.testing.assert_allclose(neumann_inverse(np.eye(5), 3), np.eye(5))


def test_neumann_matches_explicit_series():
    a = gram(draw_rayleigh(64, 4, seed=3))
    d = np.diag(np.diag(a))
    x0 = np.linalg.inv(d)
    e = x0 @ (d - a)
    expected = sum(np.linalg.matrix_power(e, n) @ x0 for n in range(4))
    np.testing.assert_allclose(neumann_inverse(a, 4), expected, atol=1e-13)


def test_neumann_singular_diagonal():
    with pytest.raises(SingularDiagonal):
        neumann_inverse(np.array([[0.0, 1.0], [1.0, 2.0]]), 2)


def _spectral_radius(e, iters=500, seed=0):
    v = np.random.default_rng(seed).standard_normal(e.shape[0]) + 0j
    lam = 0.0
    for _ in range(iters):
        w = e @ v
        lam = np.linalg.norm(w) / np.linalg.norm(v)
        v = w / np.linalg.norm(w)
    return lam


@settings(max_examples=25, deadline=None)
@given(k=st.integers(2, 6), ratio=st.integers(8, 20), seed=st.integers(0, 2**31))
def test_neumann_residual_non_increasing(k, ratio, seed):
    a = gram(draw_rayleigh(k * ratio, k, seed))
    d = np.diag(a)
    e = np.eye(k) - a / d[:, None]
    if _spectral_radius(e) >= 1:
        return
    res = [np.linalg.norm(a @ neumann_inverse(a, t) - np.eye(k)) for t in range(1, 7)]
    assert all(b <= a_ * (1 + 1e-9) + 1e-12 for a_, b in zip(res, res[1:]))


def test_pinv_identity():
    np.testing.assert_allclose(regularized_pinv(np.eye(2), 0, "direct"), np.eye(2))


@pytest.mark.parametrize("via", ["qr", "direct"])
def test_pinv_matches_numpy(via):
    g = draw_rayleigh(20, 5, seed=9)
    np.testing.assert_allclose(regularized_pinv(g, 0, via), np.linalg.pinv(g), atol=1e-11)


def test_pinv_qr_vs_direct():
    g = draw_rayleigh(100, 12, seed=4)
    for beta in (0.0, 0.5):
        a = regularized_pinv(g, beta, "qr")
        b = regularized_pinv(g, beta, "direct")
        assert np.max(np.abs(a - b)) < 1e-9


def test_pinv_regularized_matches_closed_form():
    g = draw_rayleigh(12, 4, seed=8)
    beta = 0.7
    expected = np.linalg.inv(g.conj().T @ g + beta * np.eye(4)) @ g.conj().T
    for via in ("qr", "direct"):
        np.testing.assert_allclose(regularized_pinv(g, beta, via), expected, atol=1e-12)


def test_pinv_residual_grows_with_beta():
    g = draw_rayleigh(40, 6, seed=12)
    res = [np.linalg.norm(regularized_pinv(g, b) @ g - np.eye(6)) for b in (0.0, 0.1, 1.0)]
    assert res[0] < 1e-10
    assert res[0] < res[1] < res[2]


def test_pinv_neumann_converges_with_terms():
    g = draw_rayleigh(100, 4, seed=6)
    exact = regularized_pinv(g, 0)
    errs = [np.linalg.norm(regularized_pinv(g, 0, "neumann", t) - exact) for t in (1, 3, 8, 20)]
    assert errs == sorted(errs, reverse=True)
    assert errs[-1] < 1e-6 * np.linalg.norm(exact)


def test_pinv_rank_deficient():
    g = draw_rayleigh(10, 3, seed=2)
    g[:, 1] = g[:, 0]
    for via in ("qr", "direct", "neumann"):
        with pytest.raises(RankDeficient):
            regularized_pinv(g, 0, via)


def test_pinv_batched():
    g = draw_rayleigh(16, 4, seed=3, batch=(5,))
    w = regularized_pinv(g, 0.2, "qr")
    for i in range(5):
        np.testing.assert_allclose(w[i], regularized_pinv(g[i], 0.2, "direct"), atol=1e-11)


@settings(max_examples=30, deadline=None)
@given(m=st.integers(4, 64), k=st.integers(1, 4), seed=st.integers(0, 2**31))
def test_pinv_moore_penrose(m, k, seed):
    g = draw_rayleigh(m, k, seed)
    w = regularized_pinv(g, 0, "qr")
    assert np.linalg.norm(w @ g @ w - w) < 1e-9 * max(1.0, np.linalg.norm(w))
