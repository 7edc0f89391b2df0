"""Edge curvatures on weighted digraphs and on plain undirected graphs."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.sparse.csgraph import shortest_path

from .core import Graph, RelationalStructure
from .influence import (
    WeightedDigraph,
    aggregate_influence,
    collapsed_graph,
    indicator_shifts,
    influence_graph,
)

MAX_TRANSPORT_SUPPORT = 64
CURVATURE_KINDS = ("efc", "orc", "orc-directed", "bfc", "afc3", "afc4")


class UndefinedCurvature(ValueError):
    pass


@dataclass(frozen=True)
class EdgeCurvatureReport:
    edge: tuple[int, int]
    value: float
    components: dict = field(default_factory=dict)


def _require_edge(W: np.ndarray, src: int, dst: int):
    if not W[src, dst] > 0:
        raise KeyError(f"no edge {src} -> {dst}")


def efc(graph: WeightedDigraph, edge: tuple[int, int], W: np.ndarray | None = None) -> EdgeCurvatureReport:
    """Forman-type curvature of the directed edge ``tau -> sigma``.

    ``edge`` is given as ``(tau, sigma)``.  Pass ``W = graph.matrix()`` when
    scoring many edges of the same graph.
    """
    W = graph.matrix() if W is None else W
    tau, sigma = edge
    _require_edge(W, tau, sigma)
    w_out = W[tau].sum()
    w_in = W[:, sigma].sum()
    two_step = W[tau] @ W
    w_T = two_step[sigma]
    w_F = two_step @ W[:, sigma]
    value = 4.0 - w_out - w_in + 3.0 * w_T + 2.0 * w_F
    return EdgeCurvatureReport((tau, sigma), float(value),
                               {"w_out": float(w_out), "w_in": float(w_in),
                                "w_T": float(w_T), "w_F": float(w_F)})


@dataclass(frozen=True)
class LocalGeometryCheck:
    lhs_bound: float
    rhs_bound: float
    holds: bool


def local_geometry_check(graph: WeightedDigraph, edge: tuple[int, int],
                              alphas: Sequence[float] = (1.0, 1.0),
                              betas: Sequence[float] = (1.0, 1.0),
                              W: np.ndarray | None = None) -> LocalGeometryCheck:
    """Compare the two-layer sensitivity bound along ``tau -> sigma`` with the
    value implied by the edge's curvature, for a graph built from B."""
    W = graph.matrix() if W is None else W
    rep = efc(graph, edge, W)
    scale = prod(a * b for a, b in zip(alphas, betas))
    c = rep.components
    lhs = scale * c["w_T"]
    rhs = scale * (rep.value + c["w_out"] + c["w_in"] - 4.0) / 3.0
    return LocalGeometryCheck(float(lhs), float(rhs), bool(lhs <= rhs + 1e-9))


def transport_cost(mu: np.ndarray, nu: np.ndarray, cost: np.ndarray) -> float:
    """Exact optimal transport cost between two discrete measures (LP)."""
    m, n = cost.shape
    if max(m, n) > MAX_TRANSPORT_SUPPORT:
        raise ValueError(f"support of size {max(m, n)} exceeds {MAX_TRANSPORT_SUPPORT}")
    if not np.all(np.isfinite(cost)):
        # only pairs that carry mass matter, but an unreachable pair makes the
        # problem infeasible whenever mass must cross it
        finite = np.isfinite(cost)
        big = cost[finite].max(initial=0.0) * (m + n) + 1.0
        value = transport_cost(mu, nu, np.where(finite, cost, big))
        return np.inf if value >= big - 1e-9 else value
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A_eq[m + j, j::n] = 1.0
    res = linprog(cost.ravel(), A_eq=A_eq, b_eq=np.concatenate([mu, nu]),
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def _support(p: np.ndarray):
    idx = np.nonzero(p > 0)[0]
    return idx, p[idx]


def orc_directed(graph: WeightedDigraph, edge: tuple[int, int], W: np.ndarray | None = None,
                 dist: np.ndarray | None = None) -> EdgeCurvatureReport:
    """Ollivier-Ricci curvature of ``sigma -> tau`` between the in-measure of
    sigma and the out-measure of tau, with weighted shortest-path costs."""
    W = graph.matrix() if W is None else W
    sigma, tau = edge
    _require_edge(W, sigma, tau)
    w_in, w_out = W[:, sigma].sum(), W[tau].sum()
    if w_in <= 0 or w_out <= 0:
        raise UndefinedCurvature(f"edge {edge} has an empty in- or out-measure")
    if dist is None:
        dist = shortest_path(np.where(W > 0, W, 0.0), directed=True)
    src, mu = _support(W[:, sigma] / w_in)
    dst, nu = _support(W[tau] / w_out)
    wass = transport_cost(mu, nu, dist[np.ix_(src, dst)])
    weight = W[sigma, tau]
    return EdgeCurvatureReport((sigma, tau), float(1.0 - wass / weight),
                               {"wasserstein": wass, "edge_weight": float(weight)})


def hop_distances(graph: Graph) -> np.ndarray:
    return shortest_path(graph.adjacency_matrix(), directed=False, unweighted=True)


def orc_undirected(graph: Graph, edge: tuple[int, int], dist: np.ndarray | None = None) -> float:
    """Ollivier-Ricci curvature with uniform neighbour measures and no laziness."""
    u, v = edge
    if not graph.has_edge(u, v):
        raise KeyError(f"no edge {edge}")
    dist = hop_distances(graph) if dist is None else dist
    nu_, nv = sorted(graph.neighbors[u]), sorted(graph.neighbors[v])
    mu = np.full(len(nu_), 1.0 / len(nu_))
    mv = np.full(len(nv), 1.0 / len(nv))
    return 1.0 - transport_cost(mu, mv, dist[np.ix_(nu_, nv)])


def _square_neighbours(nbrs, i: int, j: int):
    """Neighbours k of i that start a 4-cycle i-k-w-j with no diagonal, and
    for each of them the number of such w."""
    out = {}
    for k in nbrs[i]:
        if k == j or k in nbrs[j]:
            continue
        ws = [w for w in nbrs[k] & nbrs[j] if w != i and w not in nbrs[i]]
        if ws:
            out[k] = len(ws)
    return out


def bfc_from_neighbors(nbrs, i: int, j: int) -> float:
    if j not in nbrs[i]:
        raise KeyError(f"no edge ({i}, {j})")
    di, dj = len(nbrs[i]), len(nbrs[j])
    if min(di, dj) == 1:
        return 0.0
    hi, lo = max(di, dj), min(di, dj)
    tri = len(nbrs[i] & nbrs[j])
    sq_i = _square_neighbours(nbrs, i, j)
    sq_j = _square_neighbours(nbrs, j, i)
    value = 2.0 / di + 2.0 / dj - 2.0 + 2.0 * tri / hi + tri / lo
    gamma_max = max(list(sq_i.values()) + list(sq_j.values()), default=0)
    if gamma_max:
        value += (len(sq_i) + len(sq_j)) / (gamma_max * hi)
    return value


def bfc(graph: Graph, edge: tuple[int, int]) -> float:
    """Balanced Forman curvature of an undirected edge."""
    return bfc_from_neighbors(graph.neighbors, *edge)


def quadrangles(nbrs, u: int, v: int) -> int:
    """Number of 4-cycles u-v-x-y-u through the edge."""
    count = 0
    for x in nbrs[v]:
        if x == u:
            continue
        for y in nbrs[x]:
            if y not in (u, v) and y in nbrs[u]:
                count += 1
    return count


def afc_from_neighbors(nbrs, u: int, v: int, variant: str = "afc4") -> float:
    if v not in nbrs[u]:
        raise KeyError(f"no edge ({u}, {v})")
    value = 4.0 - len(nbrs[u]) - len(nbrs[v]) + 3.0 * len(nbrs[u] & nbrs[v])
    if variant == "afc4":
        value += 2.0 * quadrangles(nbrs, u, v)
    elif variant != "afc3":
        raise ValueError(f"unknown variant {variant!r}")
    return value


def afc(graph: Graph, edge: tuple[int, int], variant: str = "afc4") -> float:
    """Augmented Forman curvature counting triangles (and quadrangles for afc4)."""
    return afc_from_neighbors(graph.neighbors, *edge, variant=variant)


@dataclass(frozen=True)
class WeightedCurvature:
    wc: float
    nwc: float


def weighted_curvature(graph: Graph, curvature_fn: Callable[[Graph, tuple], float],
                       weighted_lengths: bool = False) -> WeightedCurvature:
    """Betweenness-weighted total curvature and its negative part."""
    import networkx as nx

    g = graph.to_networkx()
    bc = nx.edge_betweenness_centrality(g, normalized=False, weight="weight" if weighted_lengths else None)
    wc = nwc = 0.0
    for u, v in graph.edges:
        c = curvature_fn(graph, (u, v))
        b = bc.get((u, v), bc.get((v, u), 0.0))
        wc += b * c
        if c < 0:
            nwc += b * c
    return WeightedCurvature(wc, nwc)


def structure_graph(structure: RelationalStructure) -> Graph:
    """Undirected unit-weight graph underlying the influence graph of a
    structure, without self-loops."""
    return collapsed_graph(structure)


def curvature_distribution(obj, kind: str = "orc") -> list[tuple[tuple[int, int], float]]:
    """Curvature of every edge, in sorted edge order.

    Directed kinds (``efc``, ``orc-directed``) run on the influence graph of
    B for a structure and on the symmetric digraph of a plain graph.  The
    undirected kinds use the collapsed graph of a structure.
    """
    if kind not in CURVATURE_KINDS:
        raise ValueError(f"unknown curvature kind {kind!r}")
    return [(r.edge, r.value) for r in curvature_reports(obj, kind)]


def curvature_reports(obj, kind: str) -> list[EdgeCurvatureReport]:
    if kind in ("efc", "orc-directed"):
        if isinstance(obj, RelationalStructure):
            G = influence_graph(aggregate_influence(indicator_shifts(obj), obj.n_entities))
        elif isinstance(obj, Graph):
            G = WeightedDigraph.from_matrix(obj.adjacency_matrix())
        else:
            G = obj
        W = G.matrix()
        edges = sorted(G.edges)
        if kind == "efc":
            return [efc(G, e, W) for e in edges]
        dist = shortest_path(W, directed=True)
        return [orc_directed(G, e, W, dist) for e in edges if e[0] != e[1]]
    graph = structure_graph(obj) if isinstance(obj, RelationalStructure) else obj
    if kind == "orc":
        dist = hop_distances(graph)
        return [EdgeCurvatureReport(e, orc_undirected(graph, e, dist)) for e in graph.edges]
    if kind == "bfc":
        return [EdgeCurvatureReport(e, bfc(graph, e)) for e in graph.edges]
    return [EdgeCurvatureReport(e, afc(graph, e, kind)) for e in graph.edges]


@dataclass(frozen=True)
class TransportSensitivityCheck:
    lhs: float
    rhs: float
    kappa: float
    three_step_max: float
    holds: bool


def transport_sensitivity_check(graph: WeightedDigraph, sigma: int, tau: int,
                                alphas: Sequence[float] = (1.0, 1.0),
                                betas: Sequence[float] = (1.0, 1.0),
                                combine: str = "sum") -> TransportSensitivityCheck:
    """Bound the two-step influence of tau on sigma through the directed ORC
    of ``sigma -> tau``.

    The transport cost of moving the unshared mass is at most the longest
    3-step route ``xi -> sigma -> tau -> eta``; ``combine`` chooses whether a
    route's length is the sum of its weights (a valid shortest-path bound)
    or their product.
    """
    W = graph.matrix()
    rep = orc_directed(graph, (sigma, tau), W)
    ins = np.nonzero(W[:, sigma] > 0)[0]
    outs = np.nonzero(W[tau] > 0)[0]
    w_st = W[sigma, tau]
    if combine == "sum":
        w3 = W[ins, sigma].max() + w_st + W[tau, outs].max()
    elif combine == "product":
        w3 = W[ins, sigma].max() * w_st * W[tau, outs].max()
    else:
        raise ValueError(f"unknown combine rule {combine!r}")
    scale = prod(a * b for a, b in zip(alphas, betas))
    w_in, w_out = W[:, sigma].sum(), W[tau].sum()
    lhs = scale * float(W[tau] @ W[:, sigma])
    rhs = scale * w_out * w_in * (1.0 - (w_st / w3) * (1.0 - rep.value))
    return TransportSensitivityCheck(lhs, float(rhs), rep.value, float(w3), bool(lhs <= rhs + 1e-9))
