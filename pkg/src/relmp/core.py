"""Graphs, cell complexes and relational structures.

Entities of a structure are dense integers.  Structures produced from a
complex number their cells by dimension first and then by the sorted vertex
tuple, so matrices built from them have a reproducible row order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

#: Placeholder for a witness cell that is absent from the complex.
NULL_ENTITY = -1

ADJACENCY_KINDS = ("identity", "boundary", "coboundary", "lower", "upper")


class StructureError(ValueError):
    """Raised when a graph, complex or structure breaks its invariants."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph with optional node features.

    ``edges`` holds each undirected edge once as ``(u, v)`` with ``u < v``,
    sorted.  ``features`` is either ``None`` or an array with one row per node.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    features: np.ndarray | None = None

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[Sequence[int]], features=None) -> "Graph":
        seen = set()
        for e in edges:
            u, v = int(e[0]), int(e[1])
            if u < 0 or v < 0:
                raise StructureError(f"negative node id in edge ({u}, {v})")
            if u == v:
                raise StructureError(f"self-loop on node {u}")
            if max(u, v) >= node_count:
                raise StructureError(f"edge ({u}, {v}) exceeds node_count {node_count}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise StructureError(f"duplicate edge {key}")
            seen.add(key)
        if features is not None:
            features = np.asarray(features, dtype=float)
            if features.ndim == 1:
                features = features[:, None]
            if features.shape[0] != node_count:
                raise StructureError(
                    f"features have {features.shape[0]} rows for {node_count} nodes")
        return cls(int(node_count), tuple(sorted(seen)), features)

    @cached_property
    def neighbors(self) -> tuple[frozenset, ...]:
        adj: list[set] = [set() for _ in range(self.node_count)]
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return tuple(frozenset(a) for a in adj)

    def degree(self, v: int) -> int:
        return len(self.neighbors[v])

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.neighbors[u]

    def adjacency_matrix(self) -> np.ndarray:
        A = np.zeros((self.node_count, self.node_count))
        for u, v in self.edges:
            A[u, v] = A[v, u] = 1.0
        return A

    def with_features(self, features) -> "Graph":
        return Graph.from_edges(self.node_count, self.edges, features)

    def to_networkx(self):
        import networkx as nx

        g = nx.Graph()
        g.add_nodes_from(range(self.node_count))
        g.add_edges_from(self.edges)
        return g


@dataclass(frozen=True)
class Cell:
    id: int
    dim: int
    vertices: tuple[int, ...]
    boundary: tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class Complex:
    """Cells indexed by id, with boundary lists pointing one dimension down."""

    cells: tuple[Cell, ...]
    features: np.ndarray | None = None

    def __post_init__(self):
        for i, c in enumerate(self.cells):
            if c.id != i:
                raise StructureError(f"cell at position {i} has id {c.id}")
            if c.dim == 0:
                if len(c.vertices) != 1 or c.boundary:
                    raise StructureError(f"0-cell {i} must have one vertex and no boundary")
            for b in c.boundary:
                if not 0 <= b < len(self.cells):
                    raise StructureError(f"cell {i} references missing face {b}")
                face = self.cells[b]
                if face.dim != c.dim - 1:
                    raise StructureError(f"cell {i} has face {b} of dimension {face.dim}")
                if not set(face.vertices) <= set(c.vertices):
                    raise StructureError(f"face {b} is not contained in cell {i}")
        if self.features is not None and len(self.features) != len(self.cells):
            raise StructureError("one feature row per cell is required")

    @property
    def max_dim(self) -> int:
        return max((c.dim for c in self.cells), default=-1)

    def __len__(self):
        return len(self.cells)

    @cached_property
    def coboundary_index(self) -> tuple[tuple[int, ...], ...]:
        cob: list[list[int]] = [[] for _ in self.cells]
        for c in self.cells:
            for b in c.boundary:
                cob[b].append(c.id)
        return tuple(tuple(sorted(x)) for x in cob)

    @cached_property
    def id_of(self) -> dict[tuple[int, ...], int]:
        return {c.vertices: c.id for c in self.cells}

    def cell(self, cell_id: int) -> Cell:
        if not 0 <= cell_id < len(self.cells):
            raise KeyError(f"unknown cell id {cell_id}")
        return self.cells[cell_id]


@dataclass(frozen=True)
class Adjacency:
    boundary: frozenset
    coboundary: frozenset
    lower: frozenset
    upper: frozenset
    # a pair of ring cells can share several faces, so witnesses are tuples
    lower_witness: Mapping[int, tuple[int, ...]]
    upper_witness: Mapping[int, tuple[int, ...]]


def adjacencies(complex: Complex, cell: int) -> Adjacency:
    """The four neighbourhoods of ``cell`` together with their witness cells."""
    c = complex.cell(cell)
    cob = complex.coboundary_index
    lower: dict[int, list[int]] = {}
    for face in c.boundary:
        for other in cob[face]:
            if other != cell:
                lower.setdefault(other, []).append(face)
    upper: dict[int, list[int]] = {}
    for coface in cob[cell]:
        for other in complex.cells[coface].boundary:
            if other != cell:
                upper.setdefault(other, []).append(coface)
    return Adjacency(
        boundary=frozenset(c.boundary),
        coboundary=frozenset(cob[cell]),
        lower=frozenset(lower),
        upper=frozenset(upper),
        lower_witness={k: tuple(sorted(v)) for k, v in lower.items()},
        upper_witness={k: tuple(sorted(v)) for k, v in upper.items()},
    )


@dataclass(frozen=True)
class Relation:
    name: str
    arity: int
    tuples: tuple[tuple[int, ...], ...] = ()

    @classmethod
    def build(cls, name: str, arity: int, tuples: Iterable[Sequence[int]]) -> "Relation":
        canon = set()
        for t in tuples:
            t = tuple(int(x) for x in t)
            if len(t) != arity:
                raise StructureError(f"relation {name!r} expects arity {arity}, got {t}")
            if t in canon:
                raise StructureError(f"duplicate tuple {t} in relation {name!r}")
            canon.add(t)
        return cls(name, int(arity), tuple(sorted(canon)))

    def __len__(self):
        return len(self.tuples)

    def array(self) -> np.ndarray:
        return np.array(self.tuples, dtype=np.int64).reshape(len(self.tuples), self.arity)


@dataclass(frozen=True)
class RelationalStructure:
    """Entities ``0..n-1`` plus named relations.

    ``cells`` optionally records what each entity stands for (dimension,
    vertex set, boundary) so that the structure can be written out and read
    back without losing that information.
    """

    entities: tuple[int, ...]
    relations: tuple[Relation, ...]
    cells: tuple[Cell, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        n = len(self.entities)
        if tuple(self.entities) != tuple(range(n)):
            raise StructureError("entities must be the dense ids 0..n-1")
        names = [r.name for r in self.relations]
        if len(set(names)) != len(names):
            raise StructureError(f"duplicate relation names in {names}")
        for r in self.relations:
            for t in r.tuples:
                if len(t) != r.arity:
                    raise StructureError(f"tuple {t} does not match arity of {r.name!r}")
                if not 0 <= t[0] < n:
                    raise StructureError(f"tuple {t} in {r.name!r} has an undeclared head")
                for x in t[1:]:
                    if x != NULL_ENTITY and not 0 <= x < n:
                        raise StructureError(f"tuple {t} in {r.name!r} has an undeclared entity")
        if self.cells is not None and len(self.cells) != n:
            raise StructureError("cell metadata must cover every entity")

    @classmethod
    def build(cls, n_entities: int, relations: Iterable[Relation], cells=None) -> "RelationalStructure":
        return cls(tuple(range(n_entities)), tuple(relations), None if cells is None else tuple(cells))

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def relation_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.relations)

    def relation(self, name: str) -> Relation:
        for r in self.relations:
            if r.name == name:
                return r
        raise KeyError(f"no relation named {name!r}")

    def has_relation(self, name: str) -> bool:
        return name in self.relation_names

    def with_relation(self, relation: Relation) -> "RelationalStructure":
        """Append ``relation``, or replace the one with the same name."""
        rels = [r for r in self.relations if r.name != relation.name]
        if len(rels) == len(self.relations):
            rels.append(relation)
        else:
            rels = [relation if r.name == relation.name else r for r in self.relations]
        return RelationalStructure(self.entities, tuple(rels), self.cells)

    def with_identity(self) -> "RelationalStructure":
        if self.has_relation("identity"):
            return self
        ident = Relation.build("identity", 1, ((e,) for e in self.entities))
        return RelationalStructure(self.entities, (ident,) + self.relations, self.cells)


def to_relational(
    complex: Complex,
    selection: Iterable[str] = ADJACENCY_KINDS,
    missing_unions: Iterable[tuple[int, int]] = (),
) -> RelationalStructure:
    """Encode the adjacencies of ``complex`` as relations.

    Lower and upper adjacency become arity-3 relations whose last slot is
    the shared face or coface.  ``missing_unions`` lists ordered cell pairs
    that should be upper adjacent even though their common coface is not a
    cell of ``complex``; those tuples carry ``NULL_ENTITY`` as witness.
    """
    selection = tuple(selection)
    if not selection:
        raise StructureError("relation selection is empty")
    unknown = set(selection) - set(ADJACENCY_KINDS)
    if unknown:
        raise StructureError(f"unknown adjacency kinds {sorted(unknown)}")
    tuples: dict[str, list] = {k: [] for k in ADJACENCY_KINDS}
    for c in complex.cells:
        adj = adjacencies(complex, c.id)
        tuples["identity"].append((c.id,))
        tuples["boundary"].extend((c.id, b) for b in adj.boundary)
        tuples["coboundary"].extend((c.id, b) for b in adj.coboundary)
        for other, faces in adj.lower_witness.items():
            tuples["lower"].extend((c.id, other, f) for f in faces)
        for other, cofaces in adj.upper_witness.items():
            tuples["upper"].extend((c.id, other, f) for f in cofaces)
    tuples["upper"].extend((s, t, NULL_ENTITY) for s, t in missing_unions)
    arity = {"identity": 1, "boundary": 2, "coboundary": 2, "lower": 3, "upper": 3}
    relations = [Relation.build(k, arity[k], tuples[k]) for k in ADJACENCY_KINDS if k in selection]
    return RelationalStructure.build(len(complex.cells), relations, complex.cells)
