"""Input checks shared by the estimators and the command line."""
from __future__ import annotations

import numbers

import numpy as np

from .core import Graph, RelationalStructure, StructureError


def check_random_state(seed=None) -> np.random.Generator:
    """Turn ``seed`` into a counter-based Philox generator.

    A ``Generator`` is passed through unchanged so callers can share one.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        seed = 0
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    if not isinstance(seed, numbers.Integral) or seed < 0:
        raise ValueError(f"seed must be a nonnegative integer, got {seed!r}")
    return np.random.Generator(np.random.Philox(int(seed)))


def check_graph(graph) -> Graph:
    if not isinstance(graph, Graph):
        raise TypeError(f"expected a Graph, got {type(graph).__name__}")
    return graph


def check_graphs(graphs) -> list[Graph]:
    if isinstance(graphs, Graph):
        graphs = [graphs]
    return [check_graph(g) for g in graphs]


def check_structure(structure) -> RelationalStructure:
    if not isinstance(structure, RelationalStructure):
        raise TypeError(f"expected a RelationalStructure, got {type(structure).__name__}")
    return structure


def check_features(X, n_rows: int | None = None, dim: int | None = None) -> np.ndarray:
    """Return ``X`` as a finite 2-d float array with the expected shape."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise StructureError(f"features must be 2-d, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise StructureError("features contain NaN or infinite values")
    if n_rows is not None and X.shape[0] != n_rows:
        raise StructureError(f"expected {n_rows} feature rows, got {X.shape[0]}")
    if dim is not None and X.shape[1] != dim:
        raise StructureError(f"expected feature dimension {dim}, got {X.shape[1]}")
    return X


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
