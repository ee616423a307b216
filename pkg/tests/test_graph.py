from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest

from src.graph import MODES, GraphError, build_configuration_model, export_edges, graph_stats


@pytest.mark.parametrize("mode", MODES)
def test_two_stubs_make_one_edge(mode):
    graph = build_configuration_model([1, 1], np.random.default_rng(0), mode=mode)
    assert export_edges(graph) in ([(0, 1)], [(1, 0)])
    assert graph.degrees.tolist() == [1, 1]


def test_single_node_self_loop():
    multi = build_configuration_model([2], np.random.default_rng(0), mode="multigraph")
    assert multi.self_loops == 1
    assert multi.degrees.tolist() == [2]
    assert multi.adjacency == [[0, 0]]

    erased = build_configuration_model([2], np.random.default_rng(0), mode="erased")
    assert erased.edge_count == 0
    assert erased.self_loops == 1
    assert erased.degrees.tolist() == [0]


def test_rejects_odd_sum_and_unknown_mode():
    with pytest.raises(GraphError):
        build_configuration_model([1, 2], np.random.default_rng(0))
    with pytest.raises(GraphError):
        build_configuration_model([1, 1], np.random.default_rng(0), mode="simple")
    with pytest.raises(GraphError):
        build_configuration_model([-1, 1], np.random.default_rng(0))


def test_multigraph_keeps_every_stub():
    graph = build_configuration_model([3] * 1000, np.random.default_rng(1), mode="multigraph")
    assert graph.edge_count == 1500
    assert np.all(graph.degrees == 3)


def test_erased_graph_is_simple():
    graph = build_configuration_model([3] * 1000, np.random.default_rng(2), mode="erased")
    edges = graph.edges
    assert np.all(edges[:, 0] != edges[:, 1])
    assert np.unique(np.sort(edges, axis=1), axis=0).shape[0] == graph.edge_count
    assert abs(graph.degrees.mean() - 3.0) < 0.03


def test_rejection_sampling_returns_simple_regular_graph():
    graph = build_configuration_model([3] * 50, np.random.default_rng(3), mode="rejection_simple")
    edges = np.sort(graph.edges, axis=1)
    assert np.all(edges[:, 0] != edges[:, 1])
    assert np.unique(edges, axis=0).shape[0] == graph.edge_count
    assert np.all(graph.degrees == 3)


def test_matchings_are_uniform():
    rng = np.random.default_rng(4)
    runs = 6000
    partners = Counter()
    for _ in range(runs):
        graph = build_configuration_model([1, 1, 1, 1], rng, mode="multigraph")
        for u, v in export_edges(graph):
            if 0 in (u, v):
                partners[v if u == 0 else u] += 1
    band = 3 * math.sqrt((1 / 3) * (2 / 3) / runs)
    for node in (1, 2, 3):
        assert abs(partners[node] / runs - 1 / 3) < band


def test_expected_self_loops_on_cubic_multigraph():
    n = 1000
    loops = np.array(
        [build_configuration_model([3] * n, np.random.default_rng(seed), mode="multigraph").self_loops for seed in range(500)]
    )
    expected = 3 * n / (3 * n - 1)
    assert abs(loops.mean() - expected) < 3 * loops.std(ddof=1) / math.sqrt(loops.size) + 1e-9


def test_adjacency_is_symmetric():
    graph = build_configuration_model([4] * 30, np.random.default_rng(5), mode="multigraph")
    adjacency = graph.adjacency
    for i, neighbours in enumerate(adjacency):
        for j, count in Counter(neighbours).items():
            if j != i:
                assert Counter(adjacency[j])[i] == count
    assert [len(neighbours) for neighbours in adjacency] == graph.degrees.tolist()


def test_stats_and_fingerprint():
    first = build_configuration_model([2, 2, 2, 2], np.random.default_rng(6), mode="multigraph")
    second = build_configuration_model([2, 2, 2, 2], np.random.default_rng(6), mode="multigraph")
    assert first.fingerprint == second.fingerprint
    stats = graph_stats(first)
    assert stats.edge_count == 4
    assert stats.max_degree == 2
    assert stats.degree_pmf == {2: 1.0}
    assert stats.as_dict()["degree_pmf"] == {"2": 1.0}

    empty = graph_stats(build_configuration_model([0] * 5, np.random.default_rng(0)))
    assert empty.edge_count == 0
    assert empty.max_degree == 0
