from fractions import Fraction

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rgcnet.errors import DimensionError, DomainError, NumericError
from rgcnet.metrics import (
    EvalReport,
    betweenness_centrality,
    eigenvector_centrality,
    evaluate,
    frobenius_distance,
    mae,
    mae_betweenness,
    mae_clustering,
    mae_eigenvector,
    mae_node_strength,
    mean_report,
    node_strength,
    write_reports,
)

from oracles import (
    dense_eigvec_centrality,
    loop_frobenius,
    loop_mae,
    loop_strength_mae,
    path_betweenness,
    random_connected,
    random_graph,
)


def test_elementwise_metrics_hand_computed():
    a = np.array([[0, 1.0], [1.0, 0]])
    b = np.array([[0, 0.5], [0.25, 0]])
    assert mae(a, b) == (0.5 + 0.75) / 4
    assert frobenius_distance(a, b) == pytest.approx(np.sqrt(0.25 + 0.5625))
    assert node_strength(b).tolist() == [0.5, 0.25]
    assert mae_node_strength(a, b) == (0.5 + 0.75) / 2


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        mae(np.zeros((2, 2)), np.zeros((3, 3)))
    with pytest.raises(DimensionError):
        mae_node_strength(np.zeros((2, 3)), np.zeros((2, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 8), st.integers(0, 10_000))
def test_betweenness_matches_networkx(n, seed):
    a = random_graph(np.random.default_rng(seed), n, 0.45)
    want = nx.betweenness_centrality(nx.from_numpy_array(a), normalized=True)
    got = betweenness_centrality(a)
    np.testing.assert_allclose(got, [want[i] for i in range(n)], atol=1e-12)


def test_betweenness_exact_rationals_on_star_and_path():
    star = np.zeros((5, 5))
    star[0, 1:] = star[1:, 0] = 1
    assert betweenness_centrality(star, normalized=False).tolist() == [6.0, 0, 0, 0, 0]
    path = np.diag(np.ones(3), 1)
    path = path + path.T
    assert [Fraction(v).limit_denominator(100) for v in betweenness_centrality(path)] == path_betweenness(path)


def test_betweenness_unnormalised_small_graphs():
    assert betweenness_centrality(np.zeros((2, 2))).tolist() == [0, 0]
    assert betweenness_centrality(np.ones((1, 1))).tolist() == [0]


def test_eigenvector_centrality_matches_networkx(rng):
    a = random_connected(rng, 9, 0.3, weighted=True)
    want = nx.eigenvector_centrality_numpy(nx.from_numpy_array(a), weight="weight")
    got = eigenvector_centrality(a)
    w = np.array([want[i] for i in range(9)])
    np.testing.assert_allclose(got, w / np.linalg.norm(w), atol=1e-8)


def test_eigenvector_edge_cases():
    assert eigenvector_centrality(np.zeros((3, 3))).tolist() == [0, 0, 0]
    with pytest.raises(DomainError):
        eigenvector_centrality(np.array([[0, 1.0], [0, 0]]))


def test_eigenvector_non_convergence_carries_partial():
    a = random_connected(np.random.default_rng(1), 6, 0.5, weighted=True)
    with pytest.raises(NumericError) as info:
        eigenvector_centrality(a, max_iter=1)
    assert info.value.partial.shape == (6,)


def test_bipartite_graph_converges():
    # the shift keeps power iteration from oscillating between +-rho
    a = np.zeros((4, 4))
    a[0, 2:] = a[1, 2:] = 1
    a = a + a.T
    np.testing.assert_allclose(eigenvector_centrality(a), np.full(4, 0.5), atol=1e-9)


def test_brute_force_oracles_small_graphs(rng):
    for _ in range(20):
        n = int(rng.integers(2, 8))
        a = random_connected(rng, n, 0.3, weighted=True)
        b = random_connected(rng, n, 0.3, weighted=True)
        assert mae(a, b) == pytest.approx(loop_mae(a, b), abs=1e-15)
        assert frobenius_distance(a, b) == pytest.approx(loop_frobenius(a - b), abs=1e-14)
        assert mae_node_strength(a, b) == pytest.approx(loop_strength_mae(a, b), abs=1e-14)


def test_clustering_threshold(rng):
    a = np.ones((3, 3)) - np.eye(3)
    b = a.copy()
    b[0, 1] = b[1, 0] = 0.1
    assert mae_clustering(a, b) == 0.0
    assert mae_clustering(a, b, threshold=0.5) == 1.0


def test_evaluate_identical_is_zero(rng):
    a = random_connected(rng, 6, 0.4, weighted=True)
    r = evaluate(a, a)
    assert r.values() == (0.0,) * 6
    assert mae_betweenness(a, a) == 0 and mae_eigenvector(a, a) == 0


def test_report_csv_and_mean(tmp_path, rng):
    a = random_connected(rng, 5, 0.4, weighted=True)
    b = random_connected(rng, 5, 0.4, weighted=True)
    r1, r2 = evaluate(a, b), evaluate(b, a)
    m = mean_report([r1, r2])
    assert m.mae == pytest.approx(r1.mae)
    row = r1.to_csv_row().split(",")
    assert float(row[0]) == r1.mae  # repr round-trips exactly
    write_reports(tmp_path / "r.csv", [("x", r1)])
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].split(",") == ["model"] + EvalReport.header()
    with pytest.raises(DomainError):
        mean_report([])
