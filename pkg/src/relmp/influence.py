"""Shift operators, influence matrices and the sensitivity bounds built on them."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .core import NULL_ENTITY, Graph, RelationalStructure

DENSE_LIMIT = 512


@dataclass(frozen=True, eq=False)
class ShiftOperator:
    """Nonnegative weights on the tuples of one relation.

    Only tuples of the relation are stored, so every other entry of the
    operator is zero by construction.
    """

    relation_name: str
    arity: int
    tuples: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tuples, dtype=np.int64).reshape(-1, self.arity)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(t) != len(w):
            raise ValueError("one weight per tuple is required")
        if np.any(w < 0):
            raise ValueError(f"negative weight in shift operator {self.relation_name!r}")
        object.__setattr__(self, "tuples", t)
        object.__setattr__(self, "weights", w)

    @property
    def entries(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(x) for x in t): float(w) for t, w in zip(self.tuples, self.weights)}

    def __len__(self):
        return len(self.weights)


def indicator_shifts(structure: RelationalStructure) -> list[ShiftOperator]:
    return [ShiftOperator(r.name, r.arity, r.array(), np.ones(len(r))) for r in structure.relations]


def normalize_rows(shift: ShiftOperator) -> ShiftOperator:
    """Scale weights so the tuples headed by each entity sum to one."""
    if len(shift) == 0:
        return shift
    heads = shift.tuples[:, 0]
    totals = np.zeros(heads.max() + 1)
    np.add.at(totals, heads, shift.weights)
    denom = totals[heads]
    w = np.divide(shift.weights, denom, out=np.zeros_like(shift.weights), where=denom > 0)
    keep = w > 0
    return ShiftOperator(shift.relation_name, shift.arity, shift.tuples[keep], w[keep])


def shift_slot_matrix(shift: ShiftOperator, slot: int, n: int) -> sp.csr_matrix:
    """Sparse ``n x n`` matrix with entry (head, tuple[slot]) += weight.

    Slot 0 gives the diagonal of per-head weight totals.  Null entities are
    dropped.
    """
    t, w = shift.tuples, shift.weights
    if len(w) == 0:
        return sp.csr_matrix((n, n))
    cols = t[:, slot]
    keep = cols != NULL_ENTITY
    return sp.csr_matrix((w[keep], (t[keep, 0], cols[keep])), shape=(n, n))


@dataclass(frozen=True, eq=False)
class InfluenceMatrices:
    per_relation: dict = field(default_factory=dict)
    aggregated: np.ndarray | sp.csr_matrix | None = None
    gamma: float = 0.0
    augmented: np.ndarray | sp.csr_matrix | None = None

    @property
    def n(self) -> int:
        return self.aggregated.shape[0]

    def dense(self, which: str = "augmented") -> np.ndarray:
        M = self.augmented if which == "augmented" else self.aggregated
        return M.toarray() if sp.issparse(M) else np.asarray(M)


def relation_influence(shift: ShiftOperator, n: int) -> sp.csr_matrix:
    """Per-relation influence: weight of every tuple headed by a row entity,
    summed over each tail slot where the column entity appears.  Arity-1
    relations contribute their weights on the diagonal."""
    if shift.arity == 1:
        return shift_slot_matrix(shift, 0, n)
    M = sp.csr_matrix((n, n))
    for j in range(1, shift.arity):
        M = M + shift_slot_matrix(shift, j, n)
    return sp.csr_matrix(M)


def aggregate_influence(shifts: Sequence[ShiftOperator], entities) -> InfluenceMatrices:
    n = entities if isinstance(entities, (int, np.integer)) else len(entities)
    per = {}
    total = sp.csr_matrix((n, n))
    for s in shifts:
        per[s.relation_name] = relation_influence(s, n)
        total = total + per[s.relation_name]
    gamma = float(np.asarray(total.sum(axis=1)).max()) if n else 0.0
    aug = sp.csr_matrix(total + gamma * sp.identity(n, format="csr"))
    if n <= DENSE_LIMIT:
        per = {k: v.toarray() for k, v in per.items()}
        return InfluenceMatrices(per, total.toarray(), gamma, aug.toarray())
    return InfluenceMatrices(per, sp.csr_matrix(total), gamma, aug)


@dataclass(frozen=True, eq=False)
class WeightedDigraph:
    """Directed graph with positive edge weights, keyed ``(src, dst)``."""

    nodes: tuple[int, ...]
    edges: dict = field(default_factory=dict)

    def __post_init__(self):
        for (s, d), w in self.edges.items():
            if not w > 0:
                raise ValueError(f"edge ({s}, {d}) has nonpositive weight {w}")

    @classmethod
    def from_matrix(cls, W) -> "WeightedDigraph":
        """Edges ``src -> dst`` for every positive ``W[src, dst]``."""
        W = W.toarray() if sp.issparse(W) else np.asarray(W, dtype=float)
        src, dst = np.nonzero(W > 0)
        return cls(tuple(range(W.shape[0])), {(int(s), int(d)): float(W[s, d]) for s, d in zip(src, dst)})

    def matrix(self) -> np.ndarray:
        n = len(self.nodes)
        W = np.zeros((n, n))
        for (s, d), w in self.edges.items():
            W[s, d] = w
        return W

    def weight(self, src: int, dst: int) -> float:
        return self.edges.get((src, dst), 0.0)


def influence_graph(matrices: InfluenceMatrices, which: str = "augmented") -> WeightedDigraph:
    """Edge ``tau -> sigma`` with weight ``Q[sigma, tau]`` for each positive entry."""
    if which not in ("aggregated", "augmented"):
        raise ValueError(f"unknown influence matrix {which!r}")
    return WeightedDigraph.from_matrix(matrices.dense(which).T)


def collapsed_adjacency(structure: RelationalStructure) -> np.ndarray:
    """Count of (relation, tuple, tail slot) with the row entity as head and
    the column entity in the slot."""
    n = structure.n_entities
    A = np.zeros((n, n))
    for r in structure.relations:
        if r.arity < 2 or not len(r):
            continue
        t = r.array()
        for j in range(1, r.arity):
            keep = t[:, j] != NULL_ENTITY
            np.add.at(A, (t[keep, 0], t[keep, j]), 1.0)
    return A


def collapsed_graph(structure: RelationalStructure) -> Graph:
    """Simple undirected graph on the entities: σ and τ are joined when
    either appears in a tail slot of a tuple headed by the other."""
    A = collapsed_adjacency(structure)
    S = (A + A.T) > 0
    np.fill_diagonal(S, False)
    u, v = np.nonzero(np.triu(S, 1))
    return Graph.from_edges(structure.n_entities, zip(u.tolist(), v.tolist()))


def matrix_power_entry(B, t: int, sigma: int, tau: int) -> float:
    if t < 0:
        raise ValueError("t must be >= 0")
    B = B.toarray() if sp.issparse(B) else np.asarray(B, dtype=float)
    return float(np.linalg.matrix_power(B, t)[sigma, tau])


def walk_count(graph: WeightedDigraph, length: int, sigma: int, tau: int) -> int:
    """Directed walks from ``tau`` to ``sigma`` with at most ``length`` steps,
    counting the empty walk when ``sigma == tau``."""
    if length < 0:
        raise ValueError("length must be >= 0")
    out: dict[int, list[int]] = {}
    for s, d in graph.edges:
        out.setdefault(s, []).append(d)
    counts = {tau: 1}
    total = counts.get(sigma, 0)
    for _ in range(length):
        nxt: dict[int, int] = {}
        for node, c in counts.items():
            for d in out.get(node, ()):
                nxt[d] = nxt.get(d, 0) + c
        counts = nxt
        total += counts.get(sigma, 0)
    return total


def sensitivity_bound(matrices: InfluenceMatrices, t: int, sigma: int, tau: int,
                      alphas: Sequence[float], betas: Sequence[float]) -> float:
    """``prod(alpha * beta) * (B^t)[sigma, tau]`` over the first ``t`` layers."""
    if len(alphas) != t or len(betas) != t:
        raise ValueError(f"need {t} alphas and betas, got {len(alphas)} and {len(betas)}")
    scale = prod(a * b for a, b in zip(alphas, betas))
    return scale * matrix_power_entry(matrices.augmented, t, sigma, tau)


def depth_bound(matrices: InfluenceMatrices, r: int, m: int, alpha_max: float,
                beta_max: float, k: int, sigma: int, tau: int) -> float:
    """Depth bound at layer ``r + m`` for entities at distance ``r``.

    ``k`` is the number of relations and ``M`` the largest entry of the
    aggregated matrix; walks are counted in the graph of that matrix.
    """
    if not 0 <= m < r:
        raise ValueError(f"need 0 <= m < r, got m={m}, r={r}")
    M = float(matrices.dense("aggregated").max()) if matrices.n else 0.0
    C = (alpha_max * beta_max) ** m * (2 * k * (1 + m)) ** m
    walks = walk_count(influence_graph(matrices, "aggregated"), r + m, sigma, tau)
    return C * walks * (2 * alpha_max * beta_max * M) ** r


def hidden_dim_bound(matrices: InfluenceMatrices, t: int, sigma: int, tau: int,
                     widths: Sequence[int], message_widths: Sequence[int],
                     C_w: float, C_f: float = 1.0, C_g: float = 1.0) -> float:
    """Sensitivity bound with constants derived from layer widths.

    ``widths`` lists ``p_0..p_t`` and ``message_widths`` the message sizes
    of layers ``0..t-1``.
    """
    widths, message_widths = list(widths), list(message_widths)
    if len(widths) != t + 1 or len(message_widths) != t:
        raise ValueError(f"need {t + 1} widths and {t} message widths")
    if min(widths + message_widths, default=1) <= 0:
        raise ValueError("widths must be positive")
    alphas = [C_w * C_f * C_g * widths[l + 1] for l in range(t)]
    betas = [C_w * message_widths[l] for l in range(t)]
    return sensitivity_bound(matrices, t, sigma, tau, alphas, betas)
