from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmdp import scaling
from gmdp.auxiva import demix_apply
from gmdp.core import InvalidExponent, MixedNormParams, ShapeMismatch, SingularDemixing
from gmdp.scaling import (
    apply_scaling,
    estimate_images,
    gmdp,
    gmdp_single,
    irls_weights,
    mdp,
    mixed_norm,
    mixed_norm_objective,
    projection_back,
)

from .oracles import crandn
from .oracles import grid_min_single, lstsq_scale, mixed_norm_loops, weights_loops


# --- mixed norm ------------------------------------------------------------

def test_mixed_norm_single_entry():
    for p, q in [(0.3, 0.5), (1, 2), (2, 2), (3, 0.7)]:
        assert mixed_norm(np.array([[3 + 4j]]), p, q) == pytest.approx(5.0, rel=1e-14)


def test_mixed_norm_unit_entries():
    E = np.array([[1, 1j], [-1, (1 + 1j) / np.sqrt(2)]])
    assert mixed_norm(E, 1, 2) == pytest.approx(2 * np.sqrt(2), rel=1e-14)


def test_mixed_norm_frobenius(rng):
    E = crandn(rng, 7, 11)
    assert mixed_norm(E, 2, 2) == pytest.approx(np.linalg.norm(E), rel=1e-12)


@pytest.mark.parametrize("p, q", [(0.5, 1.5), (1, 2), (1.7, 0.4), (2, 3)])
def test_mixed_norm_matches_loops(rng, p, q):
    E = crandn(rng, 5, 6)
    assert mixed_norm(E, p, q) == pytest.approx(mixed_norm_loops(E, p, q), rel=1e-12)
    assert mixed_norm_objective(E, p, q) == pytest.approx(mixed_norm_loops(E, p, q) ** p, rel=1e-12)


def test_mixed_norm_inner_sum_is_over_frequency():
    # one frame with all energy vs energy spread over frames
    E1 = np.array([[1.0, 0.0], [1.0, 0.0]])
    E2 = np.array([[1.0, 1.0], [0.0, 0.0]])
    assert mixed_norm(E1, 1, 2) == pytest.approx(np.sqrt(2))
    assert mixed_norm(E2, 1, 2) == pytest.approx(2.0)


def test_mixed_norm_zero_and_errors():
    assert mixed_norm(np.zeros((3, 2)), 0.5, 1) == 0.0
    with pytest.raises(InvalidExponent):
        mixed_norm(np.ones((2, 2)), 0, 1)
    with pytest.raises(InvalidExponent):
        mixed_norm(np.ones((2, 2)), 1, -2)


@settings(max_examples=60, deadline=None)
@given(
    p=st.floats(0.1, 3.0), q=st.floats(0.1, 3.0),
    c=st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3),
    seed=st.integers(0, 2**32 - 1),
)
def test_mixed_norm_homogeneous(p, q, c, seed):
    E = crandn(np.random.default_rng(seed), 4, 5)
    assert mixed_norm(c * E, p, q) == pytest.approx(abs(c) * mixed_norm(E, p, q), rel=1e-10)


def test_mixed_norm_no_underflow_small_exponents():
    E = np.full((3, 3), 1e-200 + 0j)
    assert mixed_norm(E, 0.1, 0.2) > 0


# --- majorizer -------------------------------------------------------------

@pytest.mark.parametrize("q", [0.1, 0.5, 1.0, 1.6, 2.0])
def test_scalar_inequality(q):
    r = np.linspace(0, 10, 2001)
    for r0 in (0.01, 0.7, 3.0):
        bound = q / (2 * r0 ** (2 - q)) * r**2 + (1 - q / 2) * r0**q
        assert np.all(r**q <= bound + 1e-12)
        assert (q / (2 * r0 ** (2 - q))) * r0**2 + (1 - q / 2) * r0**q == pytest.approx(r0**q)


def test_weights_match_closed_form(rng):
    for p, q in [(0.3, 0.9), (1, 2), (0.8, 1.9), (1.5, 1.5), (2, 2)]:
        E = crandn(rng, 6, 9)
        np.testing.assert_allclose(irls_weights(E, p, q), weights_loops(E, p, q), rtol=1e-12)


def test_weights_are_one_for_l2(rng):
    np.testing.assert_array_equal(irls_weights(crandn(rng, 4, 4), 2, 2), 1.0)


@settings(max_examples=80, deadline=None)
@given(p=st.floats(0.1, 2.0), frac=st.floats(0, 1), seed=st.integers(0, 2**32 - 1))
def test_quadratic_surrogate_majorizes(p, frac, seed):
    q = p + frac * (2 - p)
    rng = np.random.default_rng(seed)
    E_hat = crandn(rng, 3, 4)
    w = irls_weights(E_hat, p, q)
    f_hat = mixed_norm_objective(E_hat, p, q)
    const = f_hat - np.sum(w * np.abs(E_hat) ** 2)
    for _ in range(5):
        E = E_hat + crandn(rng, 3, 4) * rng.uniform(0.01, 3)
        surrogate = np.sum(w * np.abs(E) ** 2) + const
        assert surrogate >= mixed_norm_objective(E, p, q) * (1 - 1e-12) - 1e-12


# --- apply_scaling ---------------------------------------------------------

def test_apply_scaling_ones_and_zeros(rng):
    Y = crandn(rng, 2, 5, 7)
    res = apply_scaling(np.ones((3, 2, 5)), Y)
    for k in range(2):
        for m in range(3):
            np.testing.assert_array_equal(res.images[k, m], Y[k])
    assert not np.any(apply_scaling(np.zeros((3, 2, 5)), Y).images)


def test_apply_scaling_entrywise(rng):
    Y = crandn(rng, 2, 4, 6)
    Z = crandn(rng, 3, 2, 4)
    res = apply_scaling(Z, Y)
    for k in range(2):
        for m in range(3):
            for f in range(4):
                for n in range(6):
                    assert abs(res.images[k, m, f, n] - Z[m, k, f] * Y[k, f, n]) <= 1e-15 * abs(Z[m, k, f] * Y[k, f, n]) + 1e-300


def test_apply_scaling_shape_error(rng):
    with pytest.raises(ShapeMismatch):
        apply_scaling(np.ones((2, 2, 3)), crandn(rng, 2, 4, 5))


# --- projection back -------------------------------------------------------

def test_pb_identity(rng):
    X = crandn(rng, 2, 3, 5)
    W = np.tile(np.eye(2, dtype=complex), (3, 1, 1))
    res = projection_back(W, X)
    for k in range(2):
        for m in range(2):
            np.testing.assert_array_equal(res.images[k, m], X[k] if m == k else 0)


def test_pb_diagonal_cancels_scale(rng):
    X = crandn(rng, 3, 4, 6)
    d = crandn(rng, 4, 3)
    W = np.stack([np.diag(v) for v in d])
    res = projection_back(W, demix_apply(W, X))
    for k in range(3):
        np.testing.assert_allclose(res.images[k, k], X[k], rtol=1e-14)


def test_pb_reconstructs_mixture(rng):
    X = crandn(rng, 3, 5, 8)
    W = crandn(rng, 5, 3, 3) + 3 * np.eye(3)
    res = projection_back(W, demix_apply(W, X))
    np.testing.assert_allclose(res.images.sum(axis=0), X, atol=1e-10)


def test_pb_reference_mic_subset(rng):
    X = crandn(rng, 2, 3, 4)
    W = crandn(rng, 3, 2, 2) + 2 * np.eye(2)
    full = projection_back(W, demix_apply(W, X))
    ref = projection_back(W, demix_apply(W, X), mics=[1])
    np.testing.assert_array_equal(ref.images[:, 0], full.images[:, 1])
    assert ref.mics == (1,)


def test_pb_singular():
    W = np.tile(np.array([[1, 2], [2, 4 + 1e-13]], dtype=complex), (2, 1, 1))
    with pytest.raises(SingularDemixing):
        projection_back(W, np.ones((2, 2, 3)))


# --- MDP -------------------------------------------------------------------

def test_mdp_scalar():
    assert mdp(np.array([[[2.0]]]), np.array([[[1.0]]]), k=0)[0, 0] == 2.0


def test_mdp_zero_row(rng):
    X = crandn(rng, 2, 3, 5)
    Y = crandn(rng, 1, 3, 5)
    Y[0, 1] = 0
    Z = mdp(X, Y, k=0)
    assert np.all(Z[:, 1] == 0)
    assert np.all(Z[:, [0, 2]] != 0)


def test_mdp_matches_lstsq(rng):
    X = crandn(rng, 2, 3, 8)
    Y = crandn(rng, 2, 3, 8)
    Z = mdp(X, Y)
    for m in range(2):
        for k in range(2):
            np.testing.assert_allclose(Z[m, k], lstsq_scale(X[m], Y[k]), rtol=1e-12)


# --- GMDP ------------------------------------------------------------------

def test_gmdp_rejects_exponents(rng):
    X, Y = crandn(rng, 1, 2, 3), crandn(rng, 1, 2, 3)
    with pytest.raises(InvalidExponent):
        # bypasses the dataclass validation
        bad = SimpleNamespace(p=1.5, q=1.0, max_iters=10, rel_tol=0.01, floor=1e-10)
        gmdp(X, Y, 0, bad)
    with pytest.raises(InvalidExponent):
        MixedNormParams(p=1.5, q=1.0)


def test_gmdp_l2_is_mdp(rng):
    X, Y = crandn(rng, 2, 6, 10), crandn(rng, 2, 6, 10)
    Z, iters, traces = gmdp(X, Y, params=MixedNormParams(2, 2))
    np.testing.assert_allclose(Z, mdp(X, Y), rtol=1e-9)
    assert np.all(iters == 1)
    assert all(len(tr) == 2 for row in traces for tr in row)


def test_gmdp_single_frequency_grid_oracle(rng):
    for _ in range(5):
        x, y = crandn(rng, 1, 4), crandn(rng, 1, 4)
        prm = MixedNormParams(1, 2, max_iters=20000, rel_tol=1e-10)
        z, n_iter, trace = gmdp_single(x, y, prm)
        assert trace[-1] <= grid_min_single(x, y, 1.0, 2.0) * (1 + 1e-3)


def test_gmdp_equivariance(rng):
    X, Y = crandn(rng, 2, 5, 12), crandn(rng, 2, 5, 12)
    prm = MixedNormParams(0.7, 1.4, max_iters=30)
    c = 0.3 - 1.2j
    Z, _, _ = gmdp(X, Y, params=prm)
    Zx, _, _ = gmdp(c * X, Y, params=prm)
    Zy, _, _ = gmdp(X, c * Y, params=prm)
    np.testing.assert_allclose(Zx, c * Z, rtol=1e-8)
    np.testing.assert_allclose(Zy, Z / c, rtol=1e-8)
    np.testing.assert_allclose(
        apply_scaling(Zy, c * Y).images, apply_scaling(Z, Y).images, rtol=1e-8)


@pytest.mark.parametrize("p, q", [(0.3, 0.8), (0.8, 1.9), (1, 1), (1, 2), (1.5, 2)])
def test_gmdp_descends_and_beats_mdp(rng, p, q):
    X, Y = crandn(rng, 2, 8, 30), crandn(rng, 2, 8, 30)
    Z, iters, traces = gmdp(X, Y, params=MixedNormParams(p, q))
    Zmdp = mdp(X, Y)
    for m in range(2):
        for k in range(2):
            tr = np.array(traces[m][k])
            assert len(tr) == iters[m, k] + 1
            assert np.all(tr[1:] <= tr[:-1] * (1 + 1e-10))
            obj_mdp = mixed_norm_objective(X[m] - Zmdp[m, k][:, None] * Y[k], p, q)
            assert tr[0] == pytest.approx(obj_mdp, rel=1e-12)
            obj = mixed_norm_objective(X[m] - Z[m, k][:, None] * Y[k], p, q)
            assert obj == pytest.approx(tr[-1], rel=1e-12)
            assert obj <= obj_mdp


def test_gmdp_update_rule(rng):
    # one iteration from the MDP point equals the weighted LS formula
    x, y = crandn(rng, 4, 9), crandn(rng, 4, 9)
    p, q = 0.9, 1.6
    z0 = lstsq_scale(x, y)
    from .oracles import weights_loops
    w = weights_loops(x - z0[:, None] * y, p, q)
    z1 = np.sum(w * x * y.conj(), axis=1) / np.sum(w * np.abs(y) ** 2, axis=1)
    z, n_iter, _ = gmdp_single(x, y, MixedNormParams(p, q, max_iters=1))
    assert n_iter == 1
    np.testing.assert_allclose(z, z1, rtol=1e-10)


def test_gmdp_stopping_rule(rng):
    x, y = crandn(rng, 4, 20), crandn(rng, 4, 20)
    z, n_iter, _ = gmdp_single(x, y, MixedNormParams(0.5, 1.0, max_iters=3, rel_tol=1e-12))
    assert n_iter == 3
    # with a huge tolerance the first update already satisfies the rule
    z, n_iter, _ = gmdp_single(x, y, MixedNormParams(0.5, 1.0, rel_tol=1e6))
    assert n_iter == 1
    # the stop happens at the first t with ||z_t - z_{t-1}|| <= tol ||z_{t-1}||
    prm = MixedNormParams(0.5, 1.0, rel_tol=0.01)
    z_all = [gmdp_single(x, y, MixedNormParams(0.5, 1.0, max_iters=t, rel_tol=1e-300))[0]
             for t in range(1, 40)]
    z0 = lstsq_scale(x, y)
    seq = [z0] + z_all
    first = next(t for t in range(1, len(seq))
                 if np.linalg.norm(seq[t] - seq[t - 1]) <= 0.01 * np.linalg.norm(seq[t - 1]))
    assert gmdp_single(x, y, prm)[1] == first


def test_gmdp_degenerate_row(rng):
    X, Y = crandn(rng, 1, 3, 6), crandn(rng, 1, 3, 6)
    Y[0, 2] = 0
    Z, iters, traces = gmdp(X, Y, params=MixedNormParams(0.8, 1.5))
    assert Z[0, 0, 2] == 0
    assert np.all(np.isfinite(Z))


def test_gmdp_zero_source():
    X = np.ones((1, 2, 3), complex)
    Z, iters, _ = gmdp(X, np.zeros((1, 2, 3)), params=MixedNormParams(1, 2))
    assert np.all(Z == 0)


def test_gmdp_exact_fit_is_stable(rng):
    # residual exactly zero at the start: weights hit the floor
    Y = crandn(rng, 1, 4, 10)
    X = 2.0 * Y
    Z, iters, traces = gmdp(X, Y, params=MixedNormParams(0.5, 1.0))
    np.testing.assert_allclose(Z, 2.0, rtol=1e-12)


def test_permutation_invariance(rng):
    X, Y = crandn(rng, 2, 4, 9), crandn(rng, 3, 4, 9)
    perm = [2, 0, 1]
    for method in ("mdp", "gmdp"):
        a = estimate_images(X, Y, method, params=MixedNormParams(0.6, 1.2))
        b = estimate_images(X, Y[perm], method, params=MixedNormParams(0.6, 1.2))
        np.testing.assert_array_equal(b.images, a.images[perm])
        np.testing.assert_array_equal(b.coefficients, a.coefficients[:, perm])


def test_pb_equals_mdp_under_uncorrelation(rng):
    F, N, K = 6, 16, 3
    Y = np.empty((K, F, N), complex)
    for f in range(F):
        Q, _ = np.linalg.qr(crandn(rng, N, K))  # orthonormal columns
        Y[:, f, :] = (Q * rng.uniform(0.5, 2, K)).T
    A = crandn(rng, F, K, K) + 2 * np.eye(K)
    X = np.einsum("fmk,kfn->mfn", A, Y)
    W = np.linalg.inv(A)
    pb = projection_back(W, Y).coefficients
    md = mdp(X, Y)
    np.testing.assert_allclose(md, pb, rtol=1e-8)


def test_residual_at_true_scale_is_other_images(rng):
    # X = sum_k diag(h_mk) S_k; residual at z = h_mk is the other images
    M, K, F, N = 2, 3, 5, 7
    S = crandn(rng, K, F, N)
    H = crandn(rng, M, K, F)
    images = H.transpose(1, 0, 2)[..., None] * S[:, None]
    X = images.sum(axis=0)
    for m in range(M):
        for k in range(K):
            E = X[m] - H[m, k][:, None] * S[k]
            other = sum(images[l, m] for l in range(K) if l != k)
            np.testing.assert_allclose(E, other, atol=1e-12)


def test_estimate_images_methods(rng):
    X, Y = crandn(rng, 2, 3, 8), crandn(rng, 2, 3, 8)
    W = crandn(rng, 3, 2, 2) + 2 * np.eye(2)
    with pytest.raises(ValueError):
        estimate_images(X, Y, "pb")
    with pytest.raises(ValueError):
        estimate_images(X, Y, "nope")
    res = estimate_images(X, Y, "gmdp", params=MixedNormParams(1, 2), mics=[1])
    assert res.images.shape == (2, 1, 3, 8)
    assert res.mics == (1,)
    assert len(res.objective_trace) == 1 and len(res.objective_trace[0]) == 2
    assert estimate_images(X, Y, "pb", W=W).images.shape == (2, 2, 3, 8)
