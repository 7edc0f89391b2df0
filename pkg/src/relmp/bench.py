"""Synthetic long-range tasks, random structures and the experiment runners."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .core import NULL_ENTITY, Graph, Relation, RelationalStructure
from .influence import aggregate_influence, depth_bound
from .lift import LiftConfig, cell_features, lift
from .mpnn import ModelConfig, ModelParams, Sample, TrainConfig, accuracy, empirical_jacobian, make_shifts, train
from .rewire import RewireConfig, relational_rewire
from .validation import check_positive_int, check_random_state

log = logging.getLogger(__name__)

TASKS = ("ring_transfer", "neighbors_match", "dumbbell", "tree_cycles")
ATTACH = ("none", "line", "cycle")
CSV_FIELDS = ("task", "lift", "scheme", "hidden", "ring_k", "rewire_algo", "rewire_iters", "trial", "metric", "value")


@dataclass(frozen=True)
class SyntheticSpec:
    task: str = "ring_transfer"
    k: int = 5
    cliques: int = 3
    clique_size: int = 5
    path_len: int = 3
    depth: int = 2
    branching: int = 2
    attach: str = "cycle"
    attach_len: int = 3
    classes: int = 5
    num_graphs: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.attach not in ATTACH:
            raise ValueError(f"unknown attach mode {self.attach!r}")
        for name in ("k", "cliques", "path_len", "depth", "branching", "num_graphs"):
            check_positive_int(getattr(self, name), name)
        check_positive_int(self.clique_size, "clique_size", 2)
        check_positive_int(self.classes, "classes", 2)


@dataclass(frozen=True, eq=False)
class RingSample:
    graph: Graph
    features: np.ndarray
    label: int
    root: int
    feature_node: int


@dataclass(frozen=True, eq=False)
class MatchSample:
    graph: Graph
    features: np.ndarray
    label: int
    root: int
    candidates: tuple[int, ...]


def cycle_graph(n: int) -> Graph:
    if n == 2:
        return Graph.from_edges(2, [(0, 1)])
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def gen_ring_transfer(k: int, classes: int = 5, rng=None) -> RingSample:
    """Cycle on ``2k`` nodes; the node opposite a random root carries a
    one-hot class that the root must recover."""
    check_positive_int(k, "k")
    rng = check_random_state(rng)
    n = 2 * k
    root = int(rng.integers(n))
    source = (root + k) % n
    label = int(rng.integers(classes))
    X = np.zeros((n, classes))
    X[source, label] = 1.0
    return RingSample(cycle_graph(n).with_features(X), X, label, root, source)


def neighbors_match_graph(cliques: int = 3, clique_size: int = 5) -> tuple[Graph, tuple[int, ...]]:
    """Path of cliques.  Clique ``c`` holds nodes ``c*s .. c*s+s-1``; its last
    node is bridged to the first node of clique ``c+1``.  Returns the graph and
    the candidate nodes: the last clique minus its bridge port (or everything
    but node 0 for a single clique)."""
    check_positive_int(cliques, "cliques")
    check_positive_int(clique_size, "clique_size", 2)
    s = clique_size
    edges = [(c * s + a, c * s + b) for c in range(cliques) for a, b in combinations(range(s), 2)]
    edges += [(c * s + s - 1, (c + 1) * s) for c in range(cliques - 1)]
    first = (cliques - 1) * s
    cands = tuple(range(first + 1, first + s)) if cliques > 1 else tuple(range(1, s))
    return Graph.from_edges(cliques * s, edges), cands


def gen_neighbors_match(cliques: int = 3, clique_size: int = 5, classes: int = 5, rng=None) -> MatchSample:
    """Candidates get distinct one-hot classes; the root (node 0) carries the
    class of one of them plus a flag column, and the target is that
    candidate's position in ``candidates``."""
    rng = check_random_state(rng)
    g, cands = neighbors_match_graph(cliques, clique_size)
    if len(cands) > classes:
        raise ValueError(f"{len(cands)} candidates need at least as many classes, got {classes}")
    X = np.zeros((g.node_count, classes + 1))
    codes = rng.permutation(classes)[:len(cands)]
    for v, c in zip(cands, codes):
        X[v, c] = 1.0
    target = int(rng.integers(len(cands)))
    X[0, codes[target]] = 1.0
    X[0, classes] = 1.0
    return MatchSample(g.with_features(X), X, target, 0, cands)


def gen_dumbbell(clique_size: int, path_len: int) -> Graph:
    """Two cliques joined by a path of ``path_len`` edges from node
    ``clique_size - 1`` to node ``clique_size``."""
    check_positive_int(clique_size, "clique_size", 3)
    check_positive_int(path_len, "path_len")
    s = clique_size
    edges = [(a, b) for a, b in combinations(range(s), 2)]
    edges += [(s + a, s + b) for a, b in combinations(range(s), 2)]
    chain = [s - 1] + list(range(2 * s, 2 * s + path_len - 1)) + [s]
    edges += list(zip(chain[:-1], chain[1:]))
    return Graph.from_edges(2 * s + path_len - 1, [tuple(sorted(e)) for e in edges])


def gen_tree_cycles(depth: int, branching: int = 2, attach: str = "none", length: int = 3) -> Graph:
    """Complete tree; each leaf optionally gets a path of ``length - 1`` new
    nodes hanging off it, closed back to the leaf when ``attach='cycle'``."""
    check_positive_int(depth, "depth")
    check_positive_int(branching, "branching")
    if attach not in ATTACH:
        raise ValueError(f"unknown attach mode {attach!r}")
    if attach != "none":
        check_positive_int(length, "length", 3)
    edges, level, n = [], [0], 1
    for _ in range(depth):
        nxt = []
        for p in level:
            for _ in range(branching):
                edges.append((p, n))
                nxt.append(n)
                n += 1
        level = nxt
    if attach != "none":
        for leaf in level:
            chain = [leaf] + list(range(n, n + length - 1))
            n += length - 1
            edges += list(zip(chain[:-1], chain[1:]))
            if attach == "cycle":
                edges.append((leaf, chain[-1]))
    return Graph.from_edges(n, [tuple(sorted(e)) for e in edges])


def betti_numbers(graph: Graph) -> tuple[int, int]:
    import networkx as nx

    b0 = nx.number_connected_components(graph.to_networkx())
    return b0, len(graph.edges) - graph.node_count + b0


def random_structure(rng=None, max_entities: int = 8, max_relations: int = 3, density: float = 0.3,
                     identity: bool = True, nulls: bool = True) -> RelationalStructure:
    """Random structure with binary and ternary relations (ternary ones may
    carry a null in the last slot), plus an identity relation by default."""
    rng = check_random_state(rng)
    n = int(rng.integers(2, max_entities + 1))
    rels = []
    for i in range(int(rng.integers(1, max_relations + 1))):
        arity = int(rng.integers(2, 4))
        tuples = set()
        for head in range(n):
            for _ in range(rng.binomial(n, density)):
                tail = [int(x) for x in rng.integers(n, size=arity - 1)]
                if arity == 3 and nulls and rng.random() < 0.2:
                    tail[-1] = NULL_ENTITY
                tuples.add((head, *tail))
        rels.append(Relation.build(f"r{i}", arity, tuples))
    s = RelationalStructure.build(n, rels)
    return s.with_identity() if identity else s


# experiment runners

def _split(n: int, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    order = rng.permutation(n)
    a, b = int(0.8 * n), int(0.9 * n)
    return order[:a], order[a:b], order[b:]


def ring_structure(k: int, lift_method: str = "none", rewire_iters: int = 0, rewire_algo: str = "fosr",
                   seed: int = 0) -> RelationalStructure:
    lifted = lift(cycle_graph(2 * k), LiftConfig(method=lift_method))
    s = lifted.structure
    if rewire_iters:
        s = relational_rewire(s, RewireConfig(algo=rewire_algo, iterations=rewire_iters, seed=seed))
    return s


def ring_dataset(k: int, num_graphs: int, classes: int, structure: RelationalStructure,
                 shift_kind: str, rng) -> list[Sample]:
    """RingTransfer samples sharing one structure and one set of shifts."""
    shifts = make_shifts(structure, shift_kind)
    out = []
    for _ in range(num_graphs):
        r = gen_ring_transfer(k, classes, rng)
        X = r.features if structure.cells is None else cell_features(structure, r.features)
        out.append(Sample(structure, shifts, X, r.root, r.label))
    return out


@dataclass(frozen=True)
class RingRun:
    """One configuration of a RingTransfer sweep."""

    k: int
    lift: str = "none"
    scheme: str = "rgcn"
    hidden: int = 16
    rewire_algo: str = "fosr"
    rewire_iters: int = 0
    layers: int | None = None

    @property
    def depth(self) -> int:
        return self.layers if self.layers is not None else 2 * self.k + 1


def run_ring_trial(run: RingRun, trial: int, spec: SyntheticSpec, train_config: TrainConfig,
                   shift_kind: str = "row-normalized") -> float:
    seed = np.random.SeedSequence([spec.seed, trial, run.k])
    data_rng, model_rng = (np.random.Generator(np.random.Philox(s)) for s in seed.spawn(2))
    structure = ring_structure(run.k, run.lift, run.rewire_iters, run.rewire_algo, spec.seed)
    data = ring_dataset(run.k, spec.num_graphs, spec.classes, structure, shift_kind, data_rng)
    tr, va, te = _split(len(data), data_rng)
    config = ModelConfig.build(run.scheme, run.depth, data[0].features.shape[1], run.hidden,
                               classes=spec.classes)
    tc = replace(train_config, seed=int(model_rng.integers(2 ** 31)))
    res = train(config, [data[i] for i in tr], tc, [data[i] for i in va])
    return accuracy(res.params, config, [data[i] for i in te])


def _ring_job(job):
    run, trial, spec, tc = job
    return run, trial, run_ring_trial(run, trial, spec, tc)


def run_ring_experiment(spec: SyntheticSpec, lifts: Sequence[str] = ("none",), schemes: Sequence[str] = ("rgcn",),
                        hidden_dims: Sequence[int] = (16,), rewire_iters: Sequence[int] = (0,),
                        ring_ks: Sequence[int] | None = None, trials: int = 10,
                        train_config: TrainConfig | None = None, rewire_algo: str = "fosr",
                        layers: int | None = None, workers: int = 1) -> list[dict]:
    """Test accuracy for every configuration in the cross product, one row
    per trial, in the ``CSV_FIELDS`` layout.  Trials are seeded by their
    index, so the rows do not depend on ``workers``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    tc = train_config or TrainConfig()
    jobs = [(RingRun(k, lm, sc, h, rewire_algo, it, layers), trial, spec, tc)
            for k in (ring_ks or (spec.k,)) for lm in lifts for sc in schemes
            for h in hidden_dims for it in rewire_iters for trial in range(trials)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_ring_job, jobs))
    else:
        results = [_ring_job(j) for j in jobs]
    rows = []
    for run, trial, acc in results:
        log.info("%s trial=%d acc=%.3f", run, trial, acc)
        rows.append(dict(task="ring_transfer", lift=run.lift, scheme=run.scheme, hidden=run.hidden,
                         ring_k=run.k, rewire_algo=run.rewire_algo if run.rewire_iters else "none",
                         rewire_iters=run.rewire_iters, trial=trial, metric="accuracy", value=acc))
    return sorted(rows, key=_row_key)


def _row_key(r):
    return tuple(str(r[f]) if f != "value" else "" for f in CSV_FIELDS[:-1]) + (r["trial"],)


def summarize(rows: Iterable[dict]) -> list[dict]:
    """Mean and standard error (sample std / sqrt(trials)) per configuration."""
    groups: dict = {}
    for r in rows:
        key = tuple((f, r[f]) for f in CSV_FIELDS if f not in ("trial", "value"))
        groups.setdefault(key, []).append(float(r["value"]))
    out = []
    for key, vals in groups.items():
        v = np.array(vals)
        se = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
        out.append({**dict(key), "trials": len(v), "mean": float(v.mean()), "stderr": se})
    return out


def linear_sgc_config(layers: int, width: int = 1) -> ModelConfig:
    return ModelConfig(scheme="sgc", layers=layers, widths=(width,) * (layers + 1), nonlinearity="relu")


def ring_sensitivity(k: int, lift_method: str = "none", rewire_iters: int = 0, rewire_algo: str = "fosr",
                     seed: int = 0, layers: int | None = None) -> dict:
    """Root-from-opposite Jacobian of a parameter-free neighbour-mean model
    (slopes 1) with ``layers`` (default ``k``) steps, and both bounds."""
    structure = ring_structure(k, lift_method, rewire_iters, rewire_algo, seed)
    shifts = make_shifts(structure, "row-normalized")
    r = layers or k
    config = linear_sgc_config(r)
    root, source = 0, k
    X = np.zeros((structure.n_entities, 1))
    X[:, 0] = check_random_state(seed).random(structure.n_entities)
    J = empirical_jacobian(structure, shifts, ModelParams(), config, X, r, root, source)
    mats = aggregate_influence(shifts, structure.n_entities)
    walk = float(np.linalg.matrix_power(mats.dense("augmented"), r)[root, source])
    db = depth_bound(mats, k, r - k, 1.0, 1.0, len(shifts), root, source) if r >= k and r - k < k else float("nan")
    return {"jacobian": J, "walk_bound": walk, "depth_bound": db}


def run_sensitivity_experiment(spec: SyntheticSpec, lifts: Sequence[str] = ("none",),
                               rewire_iters: Sequence[int] = (0,), ring_ks: Sequence[int] | None = None,
                               rewire_algo: str = "fosr") -> list[dict]:
    """Jacobian norm from the feature node to the root plus the layer-wise and
    depth bounds, one row per metric."""
    rows = []
    for k in ring_ks or (spec.k,):
        for lift_method in lifts:
            for iters in rewire_iters:
                res = ring_sensitivity(k, lift_method, iters, rewire_algo, spec.seed)
                for metric, value in res.items():
                    rows.append(dict(task="ring_transfer", lift=lift_method, scheme="sgc", hidden=1, ring_k=k,
                                     rewire_algo=rewire_algo if iters else "none", rewire_iters=iters, trial=0,
                                     metric=metric, value=value))
    return sorted(rows, key=lambda r: _row_key(r) + (r["metric"],))


@dataclass(frozen=True, eq=False)
class Dataset:
    spec: SyntheticSpec
    graphs: list = field(default_factory=list)


def generate(spec: SyntheticSpec) -> Dataset:
    """``num_graphs`` samples of the task in ``spec`` (a single graph for the
    deterministic dumbbell and tree tasks)."""
    rng = check_random_state(spec.seed)
    if spec.task == "ring_transfer":
        items = [gen_ring_transfer(spec.k, spec.classes, rng) for _ in range(spec.num_graphs)]
    elif spec.task == "neighbors_match":
        items = [gen_neighbors_match(spec.cliques, spec.clique_size, spec.classes, rng)
                 for _ in range(spec.num_graphs)]
    elif spec.task == "dumbbell":
        items = [gen_dumbbell(spec.clique_size, spec.path_len)]
    else:
        items = [gen_tree_cycles(spec.depth, spec.branching, spec.attach, spec.attach_len)]
    return Dataset(spec, items)
