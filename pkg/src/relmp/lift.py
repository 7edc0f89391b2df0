"""Graph lifts: plain graph, clique complex, ring complex and higher-order graph."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import (
    ADJACENCY_KINDS,
    Cell,
    Complex,
    Graph,
    Relation,
    RelationalStructure,
    StructureError,
    to_relational,
)
from .validation import check_graph, check_graphs

LIFT_METHODS = ("none", "clique", "ring", "higher_order")


@dataclass(frozen=True, eq=False)
class Lifted:
    """Result of a lift: the structure, one feature row per entity, and the
    complex it came from when there is one."""

    structure: RelationalStructure
    features: np.ndarray
    complex: Complex | None = None


@dataclass(frozen=True)
class LiftConfig:
    method: str = "clique"
    max_dim: int = 2
    max_ring: int = 7
    order_n: int = 2
    relation_selection: tuple[str, ...] = ADJACENCY_KINDS

    def __post_init__(self):
        if self.method not in LIFT_METHODS:
            raise ValueError(f"unknown lift method {self.method!r}")
        if self.max_dim < 0:
            raise ValueError("max_dim must be >= 0")
        if self.max_ring < 3:
            raise ValueError("max_ring must be >= 3")
        if self.order_n < 2:
            raise ValueError("order_n must be >= 2")


def node_features(graph: Graph) -> np.ndarray:
    if graph.features is None:
        return np.ones((graph.node_count, 1))
    return np.asarray(graph.features, dtype=float)


def _mean_features(X: np.ndarray, vertex_sets) -> np.ndarray:
    out = np.empty((len(vertex_sets), X.shape[1]))
    for i, vs in enumerate(vertex_sets):
        out[i] = X[list(vs)].mean(axis=0)
    return out


def cell_features(structure: RelationalStructure, X) -> np.ndarray:
    """Per-entity features for new node features ``X`` on an already lifted
    structure: each entity gets the mean over its vertices."""
    if structure.cells is None:
        raise StructureError("structure carries no cell metadata")
    return _mean_features(np.asarray(X, dtype=float), [c.vertices for c in structure.cells])


def enumerate_cliques(graph: Graph, max_size: int) -> list[tuple[int, ...]]:
    """All cliques with at most ``max_size`` vertices, as sorted tuples.

    Each clique is grown only with neighbours larger than its current
    maximum, so every clique is produced exactly once.
    """
    nbrs = graph.neighbors
    out: list[tuple[int, ...]] = []

    def grow(clique, candidates):
        out.append(clique)
        if len(clique) == max_size:
            return
        for v in sorted(candidates):
            grow(clique + (v,), {w for w in candidates if w > v and w in nbrs[v]})

    if max_size >= 1:
        for v in range(graph.node_count):
            grow((v,), {w for w in nbrs[v] if w > v})
    return sorted(out, key=lambda c: (len(c), c))


def chordless_cycles(graph: Graph, max_len: int) -> list[tuple[int, ...]]:
    """Induced cycles of length 3..max_len.

    A cycle is reported once, starting at its smallest vertex and walking
    towards the smaller of that vertex's two cycle neighbours.
    """
    nbrs = graph.neighbors
    found = []

    def extend(path, on_path):
        last = path[-1]
        for w in nbrs[last]:
            if w <= path[0] or w in on_path:
                continue
            # w may only touch the path at its last vertex (and at the start
            # when it closes the cycle)
            if any(w in nbrs[u] for u in path[1:-1]):
                continue
            if path[0] in nbrs[w]:
                if len(path) >= 2 and path[1] < w:
                    found.append(tuple(path) + (w,))
                continue
            if len(path) + 1 < max_len:
                on_path.add(w)
                extend(path + [w], on_path)
                on_path.discard(w)

    for s in range(graph.node_count):
        for v in nbrs[s]:
            if v > s:
                extend([s, v], {s, v})
    return sorted(found, key=lambda c: (len(c), tuple(sorted(c))))


def _vertex_cells(graph: Graph):
    return [Cell(v, 0, (v,), ()) for v in range(graph.node_count)]


def lift_none(graph: Graph) -> Lifted:
    """One entity per node and a single symmetric binary relation ``upper``."""
    graph = check_graph(graph)
    tuples = [t for u, v in graph.edges for t in ((u, v), (v, u))]
    structure = RelationalStructure.build(
        graph.node_count, [Relation.build("upper", 2, tuples)], _vertex_cells(graph))
    return Lifted(structure, node_features(graph).copy())


def lift_clique(graph: Graph, max_dim: int = 2, selection=ADJACENCY_KINDS,
                null_unions: bool = False) -> Lifted:
    """Clique complex truncated at ``max_dim``.

    With ``null_unions`` the top-dimensional cells whose union is a clique
    of the graph (but too large to be a cell) are still upper adjacent,
    with a null witness.
    """
    graph = check_graph(graph)
    if max_dim < 0:
        raise ValueError("max_dim must be >= 0")
    cliques = enumerate_cliques(graph, max_dim + 1)
    index = {c: i for i, c in enumerate(cliques)}
    cells = []
    for i, c in enumerate(cliques):
        faces = () if len(c) == 1 else tuple(sorted(index[f] for f in combinations(c, len(c) - 1)))
        cells.append(Cell(i, len(c) - 1, c, faces))
    X = node_features(graph)
    cx = Complex(tuple(cells), _mean_features(X, cliques))
    missing = []
    if null_unions:
        tops = [c for c in cliques if len(c) == max_dim + 1]
        for a, b in combinations(tops, 2):
            u = tuple(sorted(set(a) | set(b)))
            if len(u) == max_dim + 2 and all(y in graph.neighbors[x] for x, y in combinations(u, 2)):
                missing += [(index[a], index[b]), (index[b], index[a])]
    structure = to_relational(cx, selection, missing)
    return Lifted(structure, cx.features.copy(), cx)


def lift_ring(graph: Graph, max_ring: int = 7, selection=ADJACENCY_KINDS) -> Lifted:
    """Nodes, edges, and a 2-cell for every chordless cycle of length <= max_ring."""
    graph = check_graph(graph)
    if max_ring < 3:
        raise ValueError("max_ring must be >= 3")
    verts = [(v,) for v in range(graph.node_count)]
    edges = [tuple(e) for e in graph.edges]
    rings = chordless_cycles(graph, max_ring)
    cells = [Cell(v, 0, (v,), ()) for v in range(graph.node_count)]
    edge_id = {}
    for e in edges:
        edge_id[e] = len(cells)
        cells.append(Cell(len(cells), 1, e, tuple(sorted(e))))
    ring_vertex_sets = []
    for ring in sorted(rings, key=lambda r: tuple(sorted(r))):
        bnd = tuple(sorted(edge_id[tuple(sorted((ring[i], ring[(i + 1) % len(ring)])))]
                           for i in range(len(ring))))
        vs = tuple(sorted(ring))
        ring_vertex_sets.append(vs)
        cells.append(Cell(len(cells), 2, vs, bnd))
    X = node_features(graph)
    cx = Complex(tuple(cells), _mean_features(X, verts + edges + ring_vertex_sets))
    return Lifted(to_relational(cx, selection), cx.features.copy(), cx)


def lift_higher_order(graph: Graph, order_n: int = 2, with_identity: bool = False) -> Lifted:
    """Entities are the node subsets of size ``order_n``.

    Two subsets that differ in exactly one node are related through
    ``local`` when the two differing nodes are adjacent and through
    ``global`` otherwise.
    """
    graph = check_graph(graph)
    if order_n < 2:
        raise ValueError("order_n must be >= 2")
    if order_n > graph.node_count:
        raise StructureError(f"order {order_n} exceeds node count {graph.node_count}")
    subsets = list(combinations(range(graph.node_count), order_n))
    local, glob = [], []
    for i, j in combinations(range(len(subsets)), 2):
        a, b = set(subsets[i]), set(subsets[j])
        if len(a & b) != order_n - 1:
            continue
        (s,), (t,) = a - b, b - a
        target = local if graph.has_edge(s, t) else glob
        target += [(i, j), (j, i)]
    relations = [Relation.build("local", 2, local), Relation.build("global", 2, glob)]
    cells = [Cell(i, order_n - 1, s, ()) for i, s in enumerate(subsets)]
    structure = RelationalStructure.build(len(subsets), relations, cells)
    if with_identity:
        structure = structure.with_identity()
    return Lifted(structure, _mean_features(node_features(graph), subsets))


def lift(graph: Graph, config: LiftConfig | None = None) -> Lifted:
    config = config or LiftConfig()
    if config.method == "none":
        return lift_none(graph)
    if config.method == "clique":
        return lift_clique(graph, config.max_dim, config.relation_selection)
    if config.method == "ring":
        return lift_ring(graph, config.max_ring, config.relation_selection)
    return lift_higher_order(graph, config.order_n)


@dataclass(frozen=True)
class LiftStats:
    entity_count: int
    tuple_counts: dict = field(default_factory=dict)
    cells_per_dim: dict = field(default_factory=dict)

    def adjacency_tuples(self, include_identity: bool = False) -> int:
        return sum(n for name, n in self.tuple_counts.items()
                   if include_identity or name != "identity")


def lift_stats(structure: RelationalStructure) -> LiftStats:
    dims = Counter(c.dim for c in structure.cells) if structure.cells is not None else Counter()
    return LiftStats(
        entity_count=structure.n_entities,
        tuple_counts={r.name: len(r) for r in structure.relations},
        cells_per_dim=dict(sorted(dims.items())),
    )


class GraphLifter(BaseEstimator, TransformerMixin):
    """Lift each input graph into a relational structure.

    Stateless: ``fit`` only validates parameters.  ``transform`` maps a list
    of :class:`Graph` to a list of :class:`Lifted`.
    """

    def __init__(self, method="clique", max_dim=2, max_ring=7, order_n=2,
                 relation_selection=ADJACENCY_KINDS):
        self.method = method
        self.max_dim = max_dim
        self.max_ring = max_ring
        self.order_n = order_n
        self.relation_selection = relation_selection

    def _config(self) -> LiftConfig:
        return LiftConfig(self.method, self.max_dim, self.max_ring, self.order_n,
                          tuple(self.relation_selection))

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        return self

    def transform(self, X):
        config = getattr(self, "config_", None) or self._config()
        return [lift(g, config) for g in check_graphs(X)]
