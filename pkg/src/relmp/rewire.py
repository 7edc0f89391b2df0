"""Relational rewiring: run a graph rewiring back-end on the collapsed graph
of a structure and store the new edges as an extra relation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import Graph, Relation, RelationalStructure
from .curvature import afc_from_neighbors, bfc_from_neighbors
from .influence import collapsed_adjacency
from .validation import check_random_state, check_structure

REWIRE_ALGOS = ("fosr", "sdrf", "afrc", "prune")
REWIRED = "rewired"


class NoCandidateError(RuntimeError):
    """No edge can be added (the graph is complete)."""


@dataclass(frozen=True)
class RewireConfig:
    algo: str = "fosr"
    iterations: int = 40
    sdrf_temperature: float = 1.0
    fosr_power_iters: int = 50
    add_only: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.algo not in REWIRE_ALGOS:
            raise ValueError(f"unknown rewiring algorithm {self.algo!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not self.sdrf_temperature > 0:
            raise ValueError("sdrf_temperature must be > 0")
        if self.fosr_power_iters < 1:
            raise ValueError("fosr_power_iters must be >= 1")


@dataclass(frozen=True)
class RewireLogEntry:
    iteration: int
    action: str
    pair: tuple[int, int]
    score: float
    lambda2_before: float
    lambda2_after: float


def _as_matrix(graph) -> np.ndarray:
    if isinstance(graph, Graph):
        return graph.adjacency_matrix()
    A = np.array(graph, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.allclose(A, A.T):
        raise ValueError("expected a symmetric adjacency matrix")
    return A


def _neighbor_sets(A: np.ndarray):
    return [frozenset(np.nonzero(row)[0].tolist()) for row in A]


def algebraic_connectivity(graph) -> float:
    """Second-smallest eigenvalue of the combinatorial Laplacian."""
    A = _as_matrix(graph)
    if len(A) < 2:
        return 0.0
    L = np.diag(A.sum(axis=1)) - A
    return float(np.linalg.eigvalsh(L)[1])


def fiedler_estimate(A: np.ndarray, iters: int, x0=None, rng=None) -> np.ndarray:
    """Power iteration for the second eigenvector of the self-loop augmented,
    symmetrically normalised adjacency, deflating the known top one."""
    d = A.sum(axis=1) + 1.0
    s = np.sqrt(d)
    if x0 is None:
        x0 = check_random_state(rng).standard_normal(len(A))
    x = np.array(x0, dtype=float)
    for _ in range(iters):
        x -= (x @ s) * s / d.sum()
        # the lazy step keeps every eigenvalue in [0, 1]
        x = 0.5 * (x + (A @ (x / s)) / s + x / d)
        norm = np.linalg.norm(x)
        if norm == 0:
            break
        x /= norm
    x -= (x @ s) * s / d.sum()
    return x


def _fosr_choose(A: np.ndarray, x: np.ndarray):
    n = len(A)
    d = A.sum(axis=1)
    score = np.outer(x, x) / np.sqrt(np.outer(1 + d, 1 + d))
    iu, ju = np.triu_indices(n, 1)
    ok = A[iu, ju] == 0
    if not ok.any():
        raise NoCandidateError("graph is complete")
    iu, ju, vals = iu[ok], ju[ok], score[iu[ok], ju[ok]]
    k = int(np.argmin(vals))
    return (int(iu[k]), int(ju[k])), float(vals[k])


def fosr_step(graph, power_iters: int = 50, rng=None, x0=None) -> tuple[int, int]:
    """The non-edge that most increases the spectral gap to first order."""
    A = _as_matrix(graph)
    if len(A) < 2:
        raise NoCandidateError("need at least two nodes")
    x = fiedler_estimate(A, power_iters, x0, rng)
    return _fosr_choose(A, x)[0]


def _candidates(nbrs, i, j):
    out = set()
    for k in nbrs[i] | {i}:
        for l in nbrs[j] | {j}:
            if k != l and l not in nbrs[k]:
                out.add((min(k, l), max(k, l)))
    return sorted(out)


def _with_edge(nbrs, k, l):
    nb = list(nbrs)
    nb[k] = nb[k] | {l}
    nb[l] = nb[l] | {k}
    return nb


def _improvements(nbrs, edge, curvature):
    i, j = edge
    base = curvature(nbrs, i, j)
    cands = _candidates(nbrs, i, j)
    gains = np.array([curvature(_with_edge(nbrs, k, l), i, j) - base for k, l in cands])
    return cands, gains


def _most_negative(nbrs, curvature):
    edges = [(i, j) for i in range(len(nbrs)) for j in sorted(nbrs[i]) if i < j]
    if not edges:
        return None
    values = [curvature(nbrs, i, j) for i, j in edges]
    return edges[int(np.argmin(values))]


def sdrf_step(graph, temperature: float = 1.0, rng=None):
    """Add-only stochastic discrete Ricci flow step.

    Returns the sampled edge, or ``None`` when the most negatively curved
    edge has no candidate.
    """
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    nbrs = _neighbor_sets(_as_matrix(graph))
    edge = _most_negative(nbrs, bfc_from_neighbors)
    if edge is None:
        return None
    cands, gains = _improvements(nbrs, edge, bfc_from_neighbors)
    if not cands:
        return None
    z = (gains - gains.max()) / temperature
    p = np.exp(z)
    p /= p.sum()
    return cands[int(check_random_state(rng).choice(len(cands), p=p))]


def afrc_step(graph):
    """Greedy step that best raises the augmented Forman curvature of the
    most negatively curved edge.  ``None`` when nothing can be added."""
    nbrs = _neighbor_sets(_as_matrix(graph))

    def curv(nb, i, j):
        return afc_from_neighbors(nb, i, j, "afc4")

    edge = _most_negative(nbrs, curv)
    if edge is None:
        return None
    cands, gains = _improvements(nbrs, edge, curv)
    if not cands:
        return None
    return cands[int(np.argmax(gains))]


def prune_candidate(structure: RelationalStructure):
    """The pair with the highest balanced Forman curvature in the collapsed
    graph (self-loops ignored), with its score, or ``None``."""
    A = collapsed_adjacency(structure)
    S = (A + A.T) > 0
    np.fill_diagonal(S, False)
    nbrs = _neighbor_sets(S)
    best, best_val = None, -np.inf
    for i in range(len(nbrs)):
        for j in sorted(nbrs[i]):
            if i < j:
                v = bfc_from_neighbors(nbrs, i, j)
                if v > best_val:
                    best, best_val = (i, j), v
    return None if best is None else (best, best_val)


def remove_pair(structure: RelationalStructure, a: int, b: int) -> RelationalStructure:
    """Drop every tuple whose head is one of ``a, b`` and whose tail holds the other."""
    rels = []
    for r in structure.relations:
        keep = [t for t in r.tuples
                if not ((t[0] == a and b in t[1:]) or (t[0] == b and a in t[1:]))]
        rels.append(Relation(r.name, r.arity, tuple(keep)))
    return RelationalStructure(structure.entities, tuple(rels), structure.cells)


def prune_step(structure: RelationalStructure):
    """Remove the most positively curved pair; ``None`` when nothing is left."""
    found = prune_candidate(structure)
    if found is None:
        return None
    (a, b), _ = found
    return remove_pair(structure, a, b)


def relational_rewire(structure: RelationalStructure, config: RewireConfig | None = None,
                      log: list | None = None) -> RelationalStructure:
    """Rewire the collapsed graph of ``structure``.

    Add back-ends leave every existing relation untouched and store both
    orientations of the new edges in a binary relation named ``rewired``.
    ``prune`` instead deletes tuples.  Steps are appended to ``log`` when a
    list is given.
    """
    structure = check_structure(structure)
    config = config or RewireConfig()
    rng = check_random_state(config.seed)
    if config.algo == "prune":
        for it in range(config.iterations):
            found = prune_candidate(structure)
            if found is None:
                break
            before = _lambda2(structure) if log is not None else np.nan
            structure = remove_pair(structure, *found[0])
            if log is not None:
                log.append(RewireLogEntry(it, "remove", found[0], found[1], before, _lambda2(structure)))
        return structure

    A = collapsed_adjacency(structure)
    A = ((A + A.T) > 0).astype(float)
    np.fill_diagonal(A, 0.0)
    x = None
    added = []
    for it in range(config.iterations):
        before = algebraic_connectivity(A) if log is not None else np.nan
        if config.algo == "fosr":
            x = fiedler_estimate(A, config.fosr_power_iters, x, rng)
            try:
                edge, score = _fosr_choose(A, x)
            except NoCandidateError:
                break
        elif config.algo == "sdrf":
            edge, score = sdrf_step(A, config.sdrf_temperature, rng), np.nan
        else:
            edge, score = afrc_step(A), np.nan
        if edge is None:
            break
        u, v = edge
        A[u, v] = A[v, u] = 1.0
        added.append(edge)
        if log is not None:
            log.append(RewireLogEntry(it, "add", edge, score, before, algebraic_connectivity(A)))
    tuples = {t for u, v in added for t in ((u, v), (v, u))}
    if structure.has_relation(REWIRED):
        tuples |= set(structure.relation(REWIRED).tuples)
    return structure.with_relation(Relation.build(REWIRED, 2, tuples))


def _lambda2(structure):
    A = collapsed_adjacency(structure)
    A = ((A + A.T) > 0).astype(float)
    np.fill_diagonal(A, 0.0)
    return algebraic_connectivity(A)


class RelationalRewirer(BaseEstimator, TransformerMixin):
    """Apply :func:`relational_rewire` to each structure (or lifted result)."""

    def __init__(self, algo="fosr", iterations=40, sdrf_temperature=1.0,
                 fosr_power_iters=50, seed=0):
        self.algo = algo
        self.iterations = iterations
        self.sdrf_temperature = sdrf_temperature
        self.fosr_power_iters = fosr_power_iters
        self.seed = seed

    def fit(self, X=None, y=None):
        self.config_ = RewireConfig(self.algo, self.iterations, self.sdrf_temperature,
                                    self.fosr_power_iters, True, self.seed)
        return self

    def transform(self, X):
        from .lift import Lifted

        config = getattr(self, "config_", None) or self.fit().config_
        out = []
        for item in X:
            if isinstance(item, Lifted):
                out.append(Lifted(relational_rewire(item.structure, config), item.features, item.complex))
            else:
                out.append(relational_rewire(item, config))
        return out
