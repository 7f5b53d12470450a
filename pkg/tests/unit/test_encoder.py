import numpy as np
import pytest
from scipy import sparse

from asrc.domain import encoder
from asrc.domain.encoder import (
    EncoderParams,
    OptimizerState,
    asrc_loss_and_grad,
    decode_distribution,
    encode,
    encode_views,
    gae_loss,
    gae_loss_with_grad,
    kl_term,
    optimizer_step,
    parse_struct,
)
from asrc.domain.graph import (
    EdgeList,
    SymGraph,
    graph_from_dense,
    learn_graph,
    symmetrize_normalize,
)
from asrc.domain.numerics import NonFiniteLoss, SeededRng, ShapeMismatch, pairwise_dist


def fixed_graph(normalized):
    normalized = sparse.csr_matrix(np.asarray(normalized, dtype=float))
    return SymGraph(
        adjacency=normalized,
        degrees=np.asarray(normalized.sum(axis=1)).ravel(),
        normalized=normalized,
        edges=EdgeList.empty(),
    )


def random_instance(seed, n=24, d=6, h1=4, h2=3, k=4):
    rng = SeededRng(seed)
    X1 = rng.uniform(0.0, 1.0, (n, d))
    X2 = X1 + rng.normal(0.0, 0.05, (n, d))
    P = learn_graph(X1, k)
    graph = symmetrize_normalize(P)
    params = EncoderParams.initialize(d, h1, h2, rng.spawn("init"))
    return X1, X2, graph, P, params


def finite_difference(loss, params, step=1e-5):
    grads = []
    for theta in params.arrays():
        grad = np.zeros_like(theta)
        for index in np.ndindex(theta.shape):
            saved = theta[index]
            theta[index] = saved + step
            upper = loss(params)
            theta[index] = saved - step
            lower = loss(params)
            theta[index] = saved
            grad[index] = (upper - lower) / (2 * step)
        grads.append(grad)
    return grads


def relative_error(analytic, numeric, floor=1e-5):
    return np.max(
        np.abs(analytic - numeric)
        / np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    )


def test_parse_struct():
    assert parse_struct("d-256-64", 77) == (77, 256, 64)
    assert parse_struct("77-128-64", 77) == (77, 128, 64)
    with pytest.raises(ValueError):
        parse_struct("d-64", 10)


def test_zero_last_layer_gives_zero_embeddings(rng):
    X = rng.uniform(0, 1, (5, 3))
    params = EncoderParams(rng.standard_normal((3, 4)), np.zeros((4, 2)))

    assert np.all(encode(X, fixed_graph(np.eye(5)), params) == 0)


def test_identity_layers_pass_nonnegative_data_through(rng):
    X = rng.uniform(0, 1, (4, 3))
    params = EncoderParams(np.eye(3), np.eye(3))

    assert np.allclose(encode(X, fixed_graph(np.eye(4)), params), X)


def test_forward_pass_by_hand():
    graph = fixed_graph([[0.5, 0.5], [0.5, 0.5]])
    params = EncoderParams(np.array([[2.0]]), np.array([[1.0]]))

    Z = encode(np.array([[1.0], [0.0]]), graph, params)

    assert np.allclose(Z, [[1.0], [1.0]])


def test_encode_checks_shapes(rng):
    params = EncoderParams.initialize(3, 4, 2, rng)

    with pytest.raises(ShapeMismatch):
        encode(np.ones((5, 4)), fixed_graph(np.eye(5)), params)
    with pytest.raises(ShapeMismatch):
        encode(np.ones((4, 3)), fixed_graph(np.eye(5)), params)


def test_identical_views_give_identical_embeddings():
    X1, _, graph, _, params = random_instance(0)

    views = encode_views(X1, X1, graph, params)

    assert np.array_equal(views.Z1, views.Z2)
    assert np.array_equal(views.Z, views.Z1)


def test_decoder_is_uniform_for_identical_embeddings():
    P_hat = decode_distribution(np.ones((6, 3)))

    assert np.allclose(P_hat, 1 / 6, atol=1e-5)


def test_decoder_by_hand():
    P_hat = decode_distribution(np.array([[0.0], [1.0]]))

    assert P_hat[0, 0] == pytest.approx(1 / (1 + np.exp(-1)), abs=1e-9)


def test_decoder_rows_sum_to_one(rng):
    P_hat = decode_distribution(rng.standard_normal((20, 4)))

    assert np.allclose(P_hat.sum(axis=1), 1.0, atol=1e-12)


def test_gae_loss_two_point_case_by_hand():
    P = graph_from_dense(np.array([[0.0, 1.0], [1.0, 0.0]]), k=1)
    Z = np.array([[0.0], [1.0]])

    assert kl_term(P, Z) == pytest.approx(2 * np.log(1 + np.e), rel=1e-9)
    assert gae_loss(P, Z, 2.0) == pytest.approx(
        2 * np.log(1 + np.e) + 2.0, rel=1e-9
    )


def test_gae_loss_reduces_to_distance_term_when_decoder_matches(rng):
    Z = rng.standard_normal((8, 2))
    P = graph_from_dense(decode_distribution(Z), k=8)

    expected = 0.5 * 3.0 * np.sum(P.to_dense() * pairwise_dist(Z))
    assert kl_term(P, Z) == pytest.approx(0.0, abs=1e-10)
    assert gae_loss(P, Z, 3.0) == pytest.approx(expected, rel=1e-6)


def test_gae_loss_vanishes_for_identical_embeddings_and_uniform_graph():
    P = graph_from_dense(np.full((5, 5), 0.2), k=5)

    assert gae_loss(P, np.zeros((5, 2)), 1.0) == pytest.approx(0.0, abs=1e-5)


def test_gae_gradient_matches_finite_differences(rng):
    Z = rng.standard_normal((10, 3))
    P = learn_graph(rng.standard_normal((10, 3)), 3)

    _, grad = gae_loss_with_grad(P, Z, 0.7)

    numeric = np.zeros_like(Z)
    for index in np.ndindex(Z.shape):
        shifted = Z.copy()
        shifted[index] += 1e-6
        upper = gae_loss(P, shifted, 0.7)
        shifted[index] -= 2e-6
        numeric[index] = (upper - gae_loss(P, shifted, 0.7)) / 2e-6
    assert relative_error(grad, numeric) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_full_gradient_matches_finite_differences(seed):
    X1, X2, graph, P, params = random_instance(seed)
    clusters = np.arange(24) % 3 if seed % 2 else None
    for X in (X1, X2):
        pre = (graph.normalized @ X) @ params.theta1
        if np.min(np.abs(pre)) < 1e-4:
            pytest.skip("a hidden unit sits on its relu kink")

    def loss(p):
        return asrc_loss_and_grad(
            X1, X2, graph, p, P, 0.5, 0.8, clusters=clusters, tau=0.7
        )[0]

    _, analytic = asrc_loss_and_grad(
        X1, X2, graph, params, P, 0.5, 0.8, clusters=clusters, tau=0.7
    )
    numeric = finite_difference(loss, params.copy())

    for a, fd in zip(analytic.arrays(), numeric):
        assert relative_error(a, fd) < 1e-4


def test_beta_zero_leaves_only_the_auto_encoder_loss():
    X1, X2, graph, P, params = random_instance(1)

    loss, _ = asrc_loss_and_grad(X1, X2, graph, params, P, 0.5, 0.0)

    Z = encode_views(X1, X2, graph, params).Z
    assert loss == pytest.approx(gae_loss(P, Z, 0.5), rel=1e-12)


def test_divergent_inputs_raise_non_finite_loss():
    X1, X2, graph, P, params = random_instance(2)

    with np.errstate(all="ignore"), pytest.raises(NonFiniteLoss):
        asrc_loss_and_grad(X1 * 1e200, X2 * 1e200, graph, params, P, 0.5, 1.0)


def test_zero_gradient_leaves_parameters_unchanged(rng):
    params = EncoderParams.initialize(3, 4, 2, rng)
    zeros = EncoderParams(np.zeros((3, 4)), np.zeros((4, 2)))

    updated, state = optimizer_step(
        params, zeros, OptimizerState.for_params(params)
    )

    assert np.array_equal(updated.theta1, params.theta1)
    assert np.array_equal(updated.theta2, params.theta2)
    assert state.step == 1


def test_constant_gradient_moves_by_learning_rate_per_step(rng):
    params = EncoderParams.initialize(3, 4, 2, rng)
    grads = EncoderParams(np.full((3, 4), 0.5), np.full((4, 2), -0.5))
    state = OptimizerState.for_params(params, learning_rate=1e-3)

    once, state = optimizer_step(params, grads, state)
    twice, state = optimizer_step(once, grads, state)

    assert np.allclose(once.theta1 - params.theta1, -1e-3, rtol=1e-6)
    assert np.allclose(twice.theta1 - once.theta1, -1e-3, rtol=1e-6)
    assert np.allclose(twice.theta2 - once.theta2, 1e-3, rtol=1e-6)


def test_optimizer_state_round_trips_exactly(rng):
    params = EncoderParams.initialize(3, 4, 2, rng)
    grads = EncoderParams(rng.standard_normal((3, 4)), rng.standard_normal((4, 2)))
    _, state = optimizer_step(params, grads, OptimizerState.for_params(params))

    restored = OptimizerState.from_dict(state.to_dict())

    assert restored.step == state.step
    for a, b in zip(restored.first + restored.second, state.first + state.second):
        assert np.array_equal(a, b)


def test_training_lowers_the_loss():
    X1, X2, graph, P, params = random_instance(3)
    state = OptimizerState.for_params(params, learning_rate=1e-2)

    phase = encoder.train(
        X1, X2, graph, P, params, state, 0.5, 1.0, max_steps=40, rel_tol=0.0
    )

    assert len(phase.losses) == 40
    assert phase.losses[-1] < phase.losses[0]
    assert all(np.all(np.isfinite(a)) for a in phase.params.arrays())


def test_encode_follows_a_reordering_of_the_samples():
    X1, _, graph, _, params = random_instance(8)
    order = SeededRng(9).generator.permutation(X1.shape[0])
    dense = graph.normalized.toarray()

    direct = encode(X1, fixed_graph(dense), params)
    shuffled = encode(X1[order], fixed_graph(dense[np.ix_(order, order)]), params)

    assert np.allclose(shuffled, direct[order], atol=1e-12)
