from itertools import combinations

import numpy as np
import pytest
from conftest import PATH_ATILDE, rng
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import bfc_oracle, efc_loops, floyd_warshall, orc_directed_oracle, transport_vertices

from relmp.bench import cycle_graph, gen_dumbbell, random_structure
from relmp.core import Graph
from relmp.curvature import (UndefinedCurvature, afc, bfc, curvature_distribution, curvature_reports, efc,
                             orc_directed, orc_undirected, local_geometry_check, transport_cost,
                             transport_sensitivity_check, weighted_curvature)
from relmp.influence import WeightedDigraph, aggregate_influence, indicator_shifts, influence_graph


def digraph(W):
    return WeightedDigraph.from_matrix(np.asarray(W, dtype=float))


def path_b_graph():
    return digraph((7 * np.eye(5) + PATH_ATILDE).T)


def random_digraph(r, max_nodes=12, density=0.4):
    n = int(r.integers(2, max_nodes + 1))
    W = (r.random((n, n)) < density) * r.uniform(0.1, 3.0, (n, n))
    return W


def complete(n):
    return Graph.from_edges(n, combinations(range(n), 2))


# extended Forman curvature

def test_efc_single_edge():
    rep = efc(digraph([[0, 1], [0, 0]]), (0, 1))
    assert rep.value == 2
    assert rep.components == {"w_out": 1, "w_in": 1, "w_T": 0, "w_F": 0}


def test_efc_bidirected_triangle():
    W = np.ones((3, 3)) - np.eye(3)
    rep = efc(digraph(W), (0, 1))
    assert rep.components["w_T"] == 1 and rep.components["w_F"] == 3
    assert rep.value == 9


def test_efc_path_example():
    rep = efc(path_b_graph(), (0, 1))
    assert rep.components == {"w_out": 10, "w_in": 14, "w_T": 18, "w_F": 254}
    assert rep.value == 542
    B = 7 * np.eye(5) + PATH_ATILDE
    assert np.linalg.matrix_power(B, 3)[1, 0] == 254


def test_efc_missing_edge():
    with pytest.raises(KeyError):
        efc(digraph([[0, 1], [0, 0]]), (1, 0))


def test_prop_check_path_example():
    chk = local_geometry_check(path_b_graph(), (0, 1))
    assert chk.lhs_bound == 18
    assert chk.rhs_bound == pytest.approx((542 + 10 + 14 - 4) / 3)
    assert chk.holds


def test_prop_check_equality_without_quadrangles():
    W = np.zeros((3, 3))
    W[0, 1] = W[1, 2] = W[0, 2] = 1.0
    chk = local_geometry_check(digraph(W), (0, 2))
    assert efc(digraph(W), (0, 2)).components["w_F"] == 0
    assert chk.lhs_bound == chk.rhs_bound == 1


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10 ** 9))
def test_efc_matches_triple_loop(seed):
    W = random_digraph(rng(seed))
    G = digraph(W)
    for tau, sigma in G.edges:
        value, (w_out, w_in, w_T, w_F) = efc_loops(W, tau, sigma)
        rep = efc(G, (tau, sigma))
        assert rep.value == pytest.approx(value, rel=1e-12, abs=1e-12)
        assert rep.components["w_F"] == pytest.approx(w_F, rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10 ** 9), st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_prop_inequality_on_random_digraphs(seed, a, b):
    G = digraph(random_digraph(rng(seed)))
    for e in G.edges:
        assert local_geometry_check(G, e, (a, a), (b, b)).holds


# transport and Ollivier-Ricci

def test_transport_matches_vertex_enumeration():
    r = rng(3)
    for _ in range(50):
        m, n = int(r.integers(1, 4)), int(r.integers(1, 4))
        mu, nu = r.random(m) + 0.1, r.random(n) + 0.1
        mu, nu = mu / mu.sum(), nu / nu.sum()
        cost = r.uniform(0, 5, (m, n))
        assert transport_cost(mu, nu, cost) == pytest.approx(transport_vertices(mu, nu, cost), abs=1e-9)


def test_transport_rejects_large_support():
    with pytest.raises(ValueError):
        transport_cost(np.full(65, 1 / 65), np.ones(1), np.ones((65, 1)))


def test_orc_directed_identical_measures():
    # a, b -> s -> t -> a, b with unit weights
    s, t, a, b = range(4)
    W = np.zeros((4, 4))
    W[a, s] = W[b, s] = W[s, t] = W[t, a] = W[t, b] = 1.0
    rep = orc_directed(digraph(W), (s, t))
    assert rep.components["wasserstein"] == 0
    assert rep.value == 1


def test_orc_directed_bidirected_pair():
    assert orc_directed(digraph([[0, 1], [1, 0]]), (0, 1)).value == 0


def test_orc_directed_bidirected_path():
    W = np.zeros((3, 3))
    W[0, 1] = W[1, 0] = W[1, 2] = W[2, 1] = 1.0
    value = orc_directed(digraph(W), (0, 1)).value
    assert value == pytest.approx(orc_directed_oracle(W, 0, 1), abs=1e-12)


def test_orc_directed_empty_measure():
    W = np.zeros((3, 3))
    W[0, 1] = 1.0
    with pytest.raises(UndefinedCurvature):
        orc_directed(digraph(W), (0, 1))


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10 ** 9))
def test_orc_directed_matches_coupling_oracle(seed):
    r = rng(seed)
    W = random_digraph(r, max_nodes=6, density=0.35)
    G = digraph(W)
    for sigma, tau in G.edges:
        if sigma == tau:
            continue
        ins, outs = np.count_nonzero(W[:, sigma]), np.count_nonzero(W[tau])
        if not (1 <= ins <= 3 and 1 <= outs <= 3):
            continue
        expected = orc_directed_oracle(W, sigma, tau)
        value = orc_directed(G, (sigma, tau)).value
        if np.isinf(expected):
            assert np.isinf(value)
        else:
            assert value == pytest.approx(expected, abs=1e-9)
            assert value <= 1 + 1e-12


def test_orc_undirected_examples():
    assert orc_undirected(complete(3), (0, 1)) == pytest.approx(0.5)
    assert orc_undirected(complete(2), (0, 1)) == pytest.approx(0.0)
    path = Graph.from_edges(6, [(i, i + 1) for i in range(5)])
    # neighbours {1,3} and {2,4}: move 1->2 and 3->4 at cost 1 each
    mu = np.array([0.5, 0.5])
    D = floyd_warshall(path.adjacency_matrix())
    assert orc_undirected(path, (2, 3)) == pytest.approx(
        1 - transport_vertices(mu, mu, D[np.ix_([1, 3], [2, 4])]))
    assert orc_undirected(path, (2, 3)) == pytest.approx(0.0)


# Forman variants

def test_bfc_examples():
    assert bfc(complete(3), (0, 1)) == pytest.approx(1.5)
    assert bfc(cycle_graph(4), (0, 1)) == pytest.approx(bfc_oracle(4, cycle_graph(4).edges, 0, 1))
    assert bfc(cycle_graph(4), (0, 1)) == pytest.approx(1.0)
    assert bfc(Graph.from_edges(3, [(0, 1), (1, 2)]), (0, 1)) == 0


def test_afc_examples():
    assert afc(complete(2), (0, 1)) == 2
    assert afc(complete(3), (0, 1)) == 3
    assert afc(complete(3), (0, 1), "afc3") == 3
    assert afc(cycle_graph(4), (0, 1)) == 2
    assert afc(cycle_graph(4), (0, 1), "afc3") == 0
    with pytest.raises(ValueError):
        afc(complete(3), (0, 1), "afc5")


def _random_graph(r, n_max=9, p=0.4):
    n = int(r.integers(2, n_max + 1))
    pairs = [e for e in combinations(range(n), 2) if r.random() < p]
    return Graph.from_edges(n, pairs)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10 ** 9))
def test_bfc_matches_motif_oracle(seed):
    g = _random_graph(rng(seed))
    for u, v in g.edges:
        assert bfc(g, (u, v)) == pytest.approx(bfc_oracle(g.node_count, g.edges, u, v), abs=1e-12)
        assert bfc(g, (u, v)) == pytest.approx(bfc(g, (v, u)), abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10 ** 9))
def test_afc4_counts_quadrangles(seed):
    g = _random_graph(rng(seed))
    nb = g.neighbors
    for u, v in g.edges:
        quads = sum(1 for x in nb[v] for y in nb[u] if len({u, v, x, y}) == 4 and g.has_edge(x, y))
        tri = len(nb[u] & nb[v])
        assert afc(g, (u, v)) == 4 - len(nb[u]) - len(nb[v]) + 3 * tri + 2 * quads


@pytest.mark.parametrize("kind", ["orc", "bfc", "afc3", "afc4"])
@pytest.mark.parametrize("g", [cycle_graph(6), complete(5)], ids=["C6", "K5"])
def test_edge_transitive_graphs_have_constant_curvature(kind, g):
    values = [v for _, v in curvature_distribution(g, kind)]
    assert len(values) == len(g.edges)
    assert max(values) - min(values) < 1e-12


def test_distribution_of_empty_graph():
    g = Graph.from_edges(3, [])
    for kind in ("orc", "bfc", "afc4", "efc", "orc-directed"):
        assert curvature_distribution(g, kind) == []
    with pytest.raises(ValueError):
        curvature_distribution(g, "scalar")


def test_distribution_on_structures(path_structure):
    eff = curvature_reports(path_structure, "efc")
    G = influence_graph(aggregate_influence(indicator_shifts(path_structure), 5))
    assert len(eff) == len(G.edges)
    assert dict((r.edge, r.value) for r in eff)[(0, 1)] == 542


# betweenness-weighted curvature

def _edge_betweenness_oracle(g):
    n = g.node_count
    D = floyd_warshall(g.adjacency_matrix())
    A = g.adjacency_matrix()
    count = np.zeros((n, n))
    for s in range(n):
        count[s, s] = 1
        for d in range(1, n):
            for v in range(n):
                if D[s, v] == d:
                    count[s, v] = sum(count[s, u] for u in range(n) if A[u, v] and D[s, u] == d - 1)
    bc = {}
    for u, v in g.edges:
        total = 0.0
        for s in range(n):
            for t in range(s + 1, n):
                if not np.isfinite(D[s, t]):
                    continue
                for a, b in ((u, v), (v, u)):
                    if D[s, a] + 1 + D[b, t] == D[s, t]:
                        total += count[s, a] * count[t, b] / count[s, t]
        bc[(u, v)] = total
    return bc


def test_weighted_curvature_basics():
    wc = weighted_curvature(complete(2), afc)
    assert wc.wc == pytest.approx(2.0) and wc.nwc == 0
    assert weighted_curvature(complete(4), bfc).nwc == 0


def test_weighted_curvature_on_dumbbell():
    g = gen_dumbbell(5, 3)
    bc = _edge_betweenness_oracle(g)
    curv = {e: bfc_oracle(g.node_count, g.edges, *e) for e in g.edges}
    res = weighted_curvature(g, bfc)
    assert res.wc == pytest.approx(sum(bc[e] * curv[e] for e in g.edges))
    assert res.nwc == pytest.approx(sum(bc[e] * curv[e] for e in g.edges if curv[e] < 0))
    bridges = {(4, 10), (10, 11), (5, 11)}
    assert set(sorted(g.edges, key=lambda e: -bc[e])[:3]) == bridges
    # only the two edges where the path meets a clique are negatively curved
    assert {e for e in g.edges if curv[e] < 0} == {(4, 10), (5, 11)}


def test_triangle_dumbbell_orc_shifts_up_after_clique_lift():
    from relmp.lift import lift_clique
    for path_len in (3, 5, 7):
        g = gen_dumbbell(3, path_len)
        before = np.mean([v for _, v in curvature_distribution(g, "orc")])
        after = np.mean([v for _, v in curvature_distribution(lift_clique(g, 2).structure, "orc")])
        assert after > before


# transport-based sensitivity check

@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 9))
def test_transport_sensitivity_sum_rule_holds(seed):
    r = rng(seed)
    W = random_digraph(r, max_nodes=6, density=0.5)
    G = digraph(W)
    for s, t in G.edges:
        if s != t and W[t, s] > 0:
            assert transport_sensitivity_check(G, s, t, combine="sum").holds


def test_transport_sensitivity_product_rule_counterexample():
    # weights below one make the product shorter than the transport distance
    G = digraph([[0, 0.5], [1, 0]])
    chk = transport_sensitivity_check(G, 0, 1, combine="product")
    assert chk.lhs == 0 and chk.rhs == pytest.approx(-1.0)
    assert not chk.holds
    assert transport_sensitivity_check(G, 0, 1, combine="sum").holds
    with pytest.raises(ValueError):
        transport_sensitivity_check(G, 0, 1, combine="max")


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 9))
def test_prop_holds_on_structure_influence_graphs(seed):
    s = random_structure(rng(seed), max_entities=8)
    G = influence_graph(aggregate_influence(indicator_shifts(s), s.n_entities))
    W = G.matrix()
    for e in G.edges:
        assert local_geometry_check(G, e, W=W).holds
