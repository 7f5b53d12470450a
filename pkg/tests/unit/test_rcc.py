import time

import numpy as np
import pytest

from asrc.domain.graph import EdgeList
from asrc.domain.metrics import adjusted_rand_index
from asrc.domain.model import ClusterAssignment
from asrc.domain.numerics import EmptyGraph, SeededRng, SparseSymOperator
from asrc.domain.rcc import (
    DisconnectedWarning,
    RccConfig,
    anneal_alpha,
    assemble_and_solve_u,
    auto_delta,
    connectivity_radius,
    extract_clusters,
    mutual_knn_graph,
    rcc_objective,
    rcc_run,
    update_l,
    update_lambda1,
)


def single_edge(weight=1.0):
    return EdgeList(np.array([0]), np.array([1]), np.array([weight]))


def two_blobs(rng, per_blob=20):
    Z = np.r_[
        -5.0 + 0.1 * rng.standard_normal(per_blob),
        5.0 + 0.1 * rng.standard_normal(per_blob),
    ][:, None]
    return Z, np.repeat([0, 1], per_blob)


def test_update_l_by_hand():
    l = update_l(np.array([[0.0], [1.0]]), single_edge(), alpha=3.0)

    assert l[0] == pytest.approx(0.5625)


def test_update_l_lies_in_unit_interval(rng):
    U = rng.standard_normal((10, 2))
    edges = mutual_knn_graph(U, 3)

    l = update_l(U, edges, alpha=0.5)

    assert np.all((l > 0) & (l <= 1))


def test_solve_u_two_nodes_by_hand():
    U = assemble_and_solve_u(
        np.array([[1.0], [0.0]]), single_edge(), np.ones(1), 1.0, tol=1e-12
    )

    assert np.allclose(U.ravel(), [2 / 3, 1 / 3], atol=1e-10)


def test_solve_u_without_coupling_returns_data(rng):
    Z = rng.standard_normal((6, 2))
    edges = mutual_knn_graph(Z, 2)

    assert np.allclose(assemble_and_solve_u(Z, edges, np.ones(len(edges)), 0.0), Z)


def test_solve_u_rejects_negative_coupling():
    with pytest.raises(ValueError):
        assemble_and_solve_u(np.eye(2), single_edge(), np.ones(1), -1.0)


def test_lambda1_two_nodes_by_hand():
    assert update_lambda1(np.eye(2), single_edge(), np.ones(1)) == pytest.approx(
        0.5, rel=1e-5
    )


def test_lambda1_scales_with_data_and_against_weights():
    base = update_lambda1(np.eye(2), single_edge(), np.ones(1))

    assert update_lambda1(3 * np.eye(2), single_edge(), np.ones(1)) == pytest.approx(
        3 * base, rel=1e-5
    )
    assert update_lambda1(np.eye(2), single_edge(2.0), np.ones(1)) == pytest.approx(
        base / 2, rel=1e-5
    )


def test_lambda1_balances_data_and_graph_norms(rng):
    Z = rng.standard_normal((25, 3))
    edges = mutual_knn_graph(Z, 4)
    l = rng.uniform(0.2, 1.0, len(edges))
    laplacian = SparseSymOperator.shifted_laplacian(
        25, edges.i, edges.j, edges.weights * l, shift=0.0
    ).to_csr().toarray()

    lambda1 = update_lambda1(Z, edges, l, SeededRng(5), tol=1e-10)

    expected = np.linalg.norm(Z, 2) / np.linalg.norm(laplacian, 2)
    assert lambda1 == pytest.approx(expected, rel=1e-4)


def test_lambda1_needs_a_weighted_edge():
    with pytest.raises(EmptyGraph):
        update_lambda1(np.eye(2), single_edge(0.0), np.ones(1))
    with pytest.raises(EmptyGraph):
        update_lambda1(np.eye(2), EdgeList.empty(), np.ones(0))


@pytest.mark.parametrize(
    "alpha, delta, expected", [(4.0, 2.0, 2.0), (1.0, 4.0, 2.0), (8.0, 0.0, 4.0)]
)
def test_anneal_alpha(alpha, delta, expected):
    assert anneal_alpha(alpha, delta) == expected


def test_objective_never_increases_with_frozen_weights(rng):
    Z = rng.standard_normal((30, 2))
    edges = mutual_knn_graph(Z, 5)
    lambda1, alpha = 0.8, 0.5
    U, l = Z.copy(), np.ones(len(edges))
    values = [rcc_objective(U, l, Z, edges, lambda1, alpha)]

    for _ in range(15):
        l = update_l(U, edges, alpha)
        values.append(rcc_objective(U, l, Z, edges, lambda1, alpha))
        U = assemble_and_solve_u(Z, edges, l, lambda1, tol=1e-12)
        values.append(rcc_objective(U, l, Z, edges, lambda1, alpha))

    assert np.all(np.diff(values) <= 1e-9)


def test_extract_clusters_by_hand():
    assignment = extract_clusters(np.array([[0.0], [0.1], [5.0], [5.05]]), 0.5)

    assert list(assignment.labels) == [0, 0, 1, 1]


def test_extract_clusters_links_transitively():
    U = np.arange(6, dtype=float)[:, None] * 0.4

    assert extract_clusters(U, 0.5).n_clusters == 1
    assert extract_clusters(U, 0.3).n_clusters == 6


def test_extract_clusters_needs_positive_delta():
    with pytest.raises(ValueError):
        extract_clusters(np.zeros((3, 1)), 0.0)


def test_auto_delta_is_mean_nearest_neighbour_distance():
    assert auto_delta(np.array([[0.0], [1.0], [3.0]])) == pytest.approx(4 / 3)
    assert auto_delta(np.zeros((4, 2))) > 0


def test_mutual_knn_keeps_only_reciprocal_pairs():
    X = np.array([0.0, 1.0, 2.0, 10.0, 11.0, 12.0])[:, None]

    edges = mutual_knn_graph(X, 2)

    pairs = set(zip(edges.i.tolist(), edges.j.tolist()))
    assert pairs == {(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)}
    assert np.all((edges.weights > 0) & (edges.weights <= 1))


def test_mutual_knn_warns_about_isolated_nodes():
    X = np.array([0.0, 1.0, 2.0, 100.0])[:, None]

    with pytest.warns(DisconnectedWarning):
        edges = mutual_knn_graph(X, 1)

    assert list(zip(edges.i, edges.j)) == [(0, 1)]


def test_mutual_knn_cosine_metric_ignores_scale():
    X = np.array([[1.0, 0.0], [3.0, 0.0], [0.0, 1.0], [0.0, 2.0]])

    edges = mutual_knn_graph(X, 1, metric="cosine")

    assert set(zip(edges.i.tolist(), edges.j.tolist())) == {(0, 1), (2, 3)}
    assert np.allclose(edges.weights, 1.0)


def test_mutual_knn_rejects_bad_arguments():
    with pytest.raises(ValueError):
        mutual_knn_graph(np.zeros((3, 1)), 3)
    with pytest.raises(ValueError):
        mutual_knn_graph(np.eye(3), 1, metric="manhattan")


def test_rcc_separates_two_blobs(rng):
    Z, truth = two_blobs(rng)
    edges = mutual_knn_graph(Z, 5)

    assignment, state = rcc_run(Z, edges, RccConfig(delta=1.0), SeededRng(2))

    assert assignment.n_clusters == 2
    assert adjusted_rand_index(truth, assignment) == 1.0
    assert state.iteration >= 1


def test_rcc_is_deterministic(rng):
    Z, _ = two_blobs(rng)
    edges = mutual_knn_graph(Z, 5)

    first, state1 = rcc_run(Z, edges, rng=SeededRng(4))
    second, state2 = rcc_run(Z, edges, rng=SeededRng(4))

    assert first == second
    assert np.array_equal(state1.U, state2.U)


def test_plain_rcc_keeps_unit_weights(rng):
    Z, _ = two_blobs(rng, per_blob=8)
    edges = mutual_knn_graph(Z, 3)

    _, state = rcc_run(Z, edges, RccConfig(robust=False, delta=1.0))

    assert np.all(state.l == 1.0)


def test_rcc_needs_edges():
    with pytest.raises(EmptyGraph):
        rcc_run(np.zeros((3, 1)), EdgeList.empty())


def test_rcc_config_validation():
    with pytest.raises(ValueError):
        RccConfig(interval=0)
    with pytest.raises(ValueError):
        RccConfig(delta=-1.0)


def test_extraction_ignores_row_order(rng):
    U = rng.standard_normal((30, 2))
    order = rng.generator.permutation(30)

    direct = extract_clusters(U, 0.4)
    shuffled = extract_clusters(U[order], 0.4)

    assert ClusterAssignment.from_labels(direct.labels[order]) == shuffled


def test_duplicated_points_form_one_cluster():
    Z = np.tile([[1.0, 2.0]], (6, 1))

    assignment, _ = rcc_run(Z, mutual_knn_graph(Z, 2))

    assert assignment.n_clusters == 1


def test_connectivity_radius_is_the_largest_nearest_neighbour_gap():
    U = np.array([[0.0], [0.1], [0.3], [5.0], [5.5]])

    assert connectivity_radius(U) == pytest.approx(0.5)
    assert connectivity_radius(U[:1]) == 0.0


def test_spanning_tree_reaches_isolated_nodes():
    X = np.array([0.0, 1.0, 2.0, 100.0])[:, None]

    edges = mutual_knn_graph(X, 1, connect=True)

    pairs = set(zip(edges.i.tolist(), edges.j.tolist()))
    assert pairs == {(0, 1), (1, 2), (2, 3)}
    assert np.all(edges.weights > 0)


def test_spanning_tree_links_duplicated_points():
    X = np.array([0.0, 0.0, 0.0, 4.0])[:, None]

    edges = mutual_knn_graph(X, 1, connect=True)

    assert set(np.concatenate([edges.i, edges.j]).tolist()) == {0, 1, 2, 3}


def test_auto_threshold_keeps_outliers_with_their_blob(rng):
    Z, truth = two_blobs(rng)
    Z[0] = -4.2
    edges = mutual_knn_graph(Z, 5, connect=True)

    assignment, state = rcc_run(Z, edges, rng=SeededRng(6))

    assert state.threshold >= connectivity_radius(state.U)
    assert state.threshold < 9.0
    assert adjusted_rand_index(truth, assignment) == 1.0


def test_explicit_delta_is_used_as_the_threshold(rng):
    Z, _ = two_blobs(rng)

    _, state = rcc_run(Z, mutual_knn_graph(Z, 5), RccConfig(delta=0.7))

    assert state.threshold == state.delta == 0.7


def test_alpha_never_anneals_below_half_delta(rng):
    Z, _ = two_blobs(rng)

    _, state = rcc_run(Z, mutual_knn_graph(Z, 5), RccConfig(max_sweeps=60, tol=0.0))

    assert state.alpha >= state.delta / 2


def _sweep_seconds(n, repeats=5):
    rng = SeededRng(n)
    Z = rng.uniform(0.0, 1.0, (n, 2))
    edges = mutual_knn_graph(Z, 10, connect=True)
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        l = update_l(Z, edges, alpha=0.05)
        assemble_and_solve_u(Z, edges, l, lambda1=1.0)
        best = min(best, time.perf_counter() - start)
    return best


@pytest.mark.smoke
def test_sweep_cost_grows_about_linearly():
    assert _sweep_seconds(2000) <= 2.6 * _sweep_seconds(1000)
