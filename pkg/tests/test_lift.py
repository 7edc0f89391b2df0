from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import chordless_cycles_brute, cliques_brute, simplicial_adjacency_tuples

from relmp.core import NULL_ENTITY, Graph, StructureError
from relmp.lift import (GraphLifter, LiftConfig, cell_features, chordless_cycles, enumerate_cliques,
                        lift, lift_clique, lift_higher_order, lift_none, lift_ring, lift_stats)


def complete(n):
    return Graph.from_edges(n, combinations(range(n), 2))


def cycle(n):
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


graphs = st.integers(1, 8).flatmap(
    lambda n: st.lists(st.sampled_from([(i, j) for i in range(n) for j in range(i + 1, n)] or [None]),
                       unique=True).map(lambda es: Graph.from_edges(n, [e for e in es if e])))


def test_k5_counts():
    lifted = lift_clique(complete(5), max_dim=2)
    stats = lift_stats(lifted.structure)
    assert stats.entity_count == 25
    assert stats.cells_per_dim == {0: 5, 1: 10, 2: 10}
    assert stats.tuple_counts == {"identity": 25, "boundary": 50, "coboundary": 50,
                                  "lower": 120, "upper": 80}
    assert stats.adjacency_tuples() == 300
    assert stats.adjacency_tuples(include_identity=True) == 325


@pytest.mark.parametrize("n", [3, 4, 5, 6, 7])
@pytest.mark.parametrize("max_dim", [1, 2, 3])
def test_complete_graph_counts_match_brute_force(n, max_dim):
    counts = lift_stats(lift_clique(complete(n), max_dim).structure).tuple_counts
    exp = simplicial_adjacency_tuples(n, list(combinations(range(n), 2)), max_dim)
    for k, v in exp.items():
        assert counts[k] == v, k


def test_cells_are_ordered_by_dim_then_vertices():
    cx = lift_clique(Graph.from_edges(3, [(0, 1), (1, 2)]), 1).complex
    assert [c.vertices for c in cx.cells] == [(0,), (1,), (2,), (0, 1), (1, 2)]


def test_lift_none():
    s = lift_none(cycle(4)).structure
    assert s.relation_names == ("upper",)
    assert len(s.relation("upper")) == 8


def test_ring_lift_on_cycle_with_chord():
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)])
    cx = lift_ring(g, 7).complex
    rings = sorted(c.vertices for c in cx.cells if c.dim == 2)
    # the 4-cycle has a chord so only the two triangles survive
    assert rings == [(0, 1, 2), (0, 2, 3)]
    assert lift_ring(cycle(6), 5).complex.max_dim == 1
    assert lift_ring(cycle(6), 6).complex.max_dim == 2


def test_higher_order_lift():
    s = lift_higher_order(Graph.from_edges(3, [(0, 1)]), 2).structure
    # subsets 01 02 12; 02 -> 12 differ by 0/1 which are adjacent
    assert s.n_entities == 3
    assert (1, 2) in s.relation("local").tuples
    assert (0, 1) in s.relation("global").tuples
    with pytest.raises(StructureError):
        lift_higher_order(Graph.from_edges(2, [(0, 1)]), 3)
    assert lift_higher_order(cycle(4), 2, with_identity=True).structure.has_relation("identity")


def test_null_unions_are_opt_in():
    g = complete(4)
    plain = lift_clique(g, 1).structure
    assert all(NULL_ENTITY not in t for t in plain.relation("upper").tuples)
    nulls = lift_clique(g, 1, null_unions=True).structure
    extra = [t for t in nulls.relation("upper").tuples if t[2] == NULL_ENTITY]
    # edges sharing a vertex in K4 lie in a triangle: 12 unordered pairs
    assert len(extra) == 24


def test_features_are_vertex_means():
    g = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)], features=[[0.0], [3.0], [6.0]])
    lifted = lift_clique(g, 2)
    np.testing.assert_allclose(lifted.features[:, 0], [0, 3, 6, 1.5, 3, 4.5, 3])
    np.testing.assert_allclose(cell_features(lifted.structure, [[1.0], [1.0], [4.0]])[-1], [2.0])


def test_lifter_estimator():
    lifter = GraphLifter(method="clique", max_dim=1)
    out = lifter.fit_transform([cycle(4), complete(3)])
    assert [o.structure.n_entities for o in out] == [8, 6]
    assert lifter.get_params()["max_dim"] == 1
    with pytest.raises(ValueError):
        LiftConfig(method="nope")
    assert lift(cycle(5), LiftConfig("ring")).complex.max_dim == 2


@settings(max_examples=80, deadline=None)
@given(graphs, st.integers(0, 3))
def test_cliques_match_brute_force(g, max_dim):
    assert sorted(enumerate_cliques(g, max_dim + 1)) == sorted(cliques_brute(g.node_count, g.edges, max_dim + 1))


@settings(max_examples=80, deadline=None)
@given(graphs, st.integers(3, 8))
def test_chordless_cycles_match_brute_force(g, max_len):
    found = sorted(tuple(sorted(c)) for c in chordless_cycles(g, max_len))
    assert found == sorted(chordless_cycles_brute(g.node_count, g.edges, max_len))


@settings(max_examples=60, deadline=None)
@given(graphs, st.integers(1, 3))
def test_clique_lift_tuple_counts(g, max_dim):
    counts = lift_stats(lift_clique(g, max_dim).structure).tuple_counts
    exp = simplicial_adjacency_tuples(g.node_count, g.edges, max_dim)
    for k, v in exp.items():
        assert counts[k] == v
