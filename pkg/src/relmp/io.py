"""File formats: edge lists, feature files, JSON structures and CSV tables."""
from __future__ import annotations

import csv
import hashlib
import json
import re
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Cell, Complex, Graph, Relation, RelationalStructure, StructureError

FORMAT_VERSION = 1
_HEADER = re.compile(r"#\s*n\s*=\s*(\d+)\s*$")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def parse_edge_list(text: str, source: str = "<string>") -> Graph:
    """Parse one ``u v`` pair per line.

    Blank lines and ``#`` comments are skipped; a ``# n=<N>`` line fixes the
    node count so that trailing isolated nodes survive.
    """
    declared = None
    edges, problems = [], []
    seen: dict[tuple[int, int], int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _HEADER.match(line)
            if m:
                declared = int(m.group(1))
            continue
        tokens = line.split()
        if len(tokens) != 2:
            problems.append(f"{source}:{lineno}: expected 2 tokens, found {len(tokens)}")
            continue
        try:
            u, v = int(tokens[0]), int(tokens[1])
        except ValueError:
            problems.append(f"{source}:{lineno}: node ids must be integers")
            continue
        if u < 0 or v < 0:
            problems.append(f"{source}:{lineno}: negative node id in ({u}, {v})")
        elif u == v:
            problems.append(f"{source}:{lineno}: self-loop on node {u}")
        else:
            key = (min(u, v), max(u, v))
            if key in seen:
                problems.append(f"{source}:{lineno}: duplicate edge {key} (first on line {seen[key]})")
            else:
                seen[key] = lineno
                edges.append(key)
    if problems:
        raise DataError("\n".join(problems))
    n = 1 + max((max(e) for e in edges), default=-1)
    if declared is not None:
        if declared < n:
            raise DataError(f"{source}: header declares {declared} nodes but ids reach {n - 1}")
        n = declared
    return Graph.from_edges(n, edges)


def read_edge_list(path) -> Graph:
    path = Path(path)
    return parse_edge_list(path.read_text(encoding="utf-8"), str(path))


def write_edge_list(graph: Graph, path):
    lines = [f"# n={graph.node_count}"] + [f"{u} {v}" for u, v in graph.edges]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_features(path, n_nodes: int | None = None) -> np.ndarray:
    """One comma-separated vector per line."""
    rows = []
    path = Path(path)
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        try:
            rows.append([float(x) for x in raw.split(",")])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric feature value") from None
    if len({len(r) for r in rows}) > 1:
        raise DataError(f"{path}: feature rows differ in length")
    X = np.array(rows, dtype=float).reshape(len(rows), -1)
    if not np.all(np.isfinite(X)):
        raise DataError(f"{path}: non-finite feature values")
    if n_nodes is not None and len(X) != n_nodes:
        raise DataError(f"{path}: {len(X)} feature rows for {n_nodes} nodes")
    return X


def _entities_to_json(n, cells):
    if cells is None:
        return [{"id": i} for i in range(n)]
    return [{"id": c.id, "dim": c.dim, "vertices": list(c.vertices), "boundary": list(c.boundary)} for c in cells]


def _entities_from_json(data):
    """Entity ids and, when every entry carries a dimension, the cell metadata."""
    ids = [int(e["id"]) for e in data]
    if ids != list(range(len(ids))):
        raise DataError("entity ids must be the dense range 0..n-1 in order")
    if data and all("dim" in e for e in data):
        cells = tuple(Cell(int(e["id"]), int(e["dim"]), tuple(e["vertices"]), tuple(e.get("boundary", ())))
                      for e in data)
        return len(ids), cells
    return len(ids), None


def _features_to_json(X):
    if X is None:
        return None
    return {str(i): row for i, row in enumerate(np.asarray(X, dtype=float).tolist())}


def _features_from_json(data, n):
    if data is None:
        return None
    if set(data) != {str(i) for i in range(n)}:
        raise DataError("features must have one entry per entity id")
    return np.array([data[str(i)] for i in range(n)], dtype=float).reshape(n, -1)


def structure_to_dict(structure: RelationalStructure, features=None) -> dict:
    """JSON-ready form; missing witnesses keep their ``-1`` sentinel."""
    return {
        "kind": "structure",
        "version": FORMAT_VERSION,
        "entities": _entities_to_json(structure.n_entities, structure.cells),
        "relations": [{"name": r.name, "arity": r.arity, "tuples": [list(t) for t in r.tuples]}
                      for r in structure.relations],
        "features": _features_to_json(features),
    }


def structure_from_dict(data: dict) -> tuple[RelationalStructure, np.ndarray | None]:
    if data.get("kind", "structure") != "structure":
        raise DataError(f"expected a structure document, got kind {data.get('kind')!r}")
    try:
        n, cells = _entities_from_json(data["entities"])
        rels = [Relation.build(r["name"], int(r["arity"]), [tuple(int(x) for x in t) for t in r["tuples"]])
                for r in data["relations"]]
        s = RelationalStructure.build(n, rels, cells)
    except (KeyError, TypeError, StructureError) as e:
        raise DataError(f"invalid structure document: {e}") from e
    return s, _features_from_json(data.get("features"), n)


def complex_to_dict(cx: Complex) -> dict:
    return {"kind": "complex", "version": FORMAT_VERSION, "entities": _entities_to_json(len(cx), cx.cells),
            "relations": [], "features": _features_to_json(cx.features)}


def complex_from_dict(data: dict) -> Complex:
    if data.get("kind") != "complex":
        raise DataError(f"expected a complex document, got kind {data.get('kind')!r}")
    try:
        n, cells = _entities_from_json(data["entities"])
        if cells is None:
            raise DataError("complex entities need dim, vertices and boundary")
        return Complex(cells, _features_from_json(data.get("features"), n))
    except (KeyError, TypeError, StructureError) as e:
        raise DataError(f"invalid complex document: {e}") from e


def graph_to_dict(graph: Graph) -> dict:
    return {"kind": "graph", "version": FORMAT_VERSION, "node_count": graph.node_count,
            "edges": [list(e) for e in graph.edges], "features": _features_to_json(graph.features)}


def graph_from_dict(data: dict) -> Graph:
    try:
        n = int(data["node_count"])
        return Graph.from_edges(n, [tuple(e) for e in data["edges"]], _features_from_json(data.get("features"), n))
    except (KeyError, TypeError, StructureError) as e:
        raise DataError(f"invalid graph document: {e}") from e


def write_json(obj, path, features=None):
    if isinstance(obj, Graph):
        doc = graph_to_dict(obj)
    elif isinstance(obj, RelationalStructure):
        doc = structure_to_dict(obj, features)
    elif isinstance(obj, Complex):
        doc = complex_to_dict(obj)
    else:
        doc = obj
    Path(path).write_text(json.dumps(doc, indent=1, default=_json_default) + "\n", encoding="utf-8")


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def read_json(path):
    """A structure document returns ``(structure, features)``; graph and
    complex documents return a :class:`Graph` or :class:`Complex`; anything
    else comes back as parsed."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON: {e}") from e
    if isinstance(data, dict) and data.get("kind") == "graph":
        return graph_from_dict(data)
    if isinstance(data, dict) and data.get("kind") == "complex":
        return complex_from_dict(data)
    if isinstance(data, dict) and "relations" in data:
        return structure_from_dict(data)
    return data


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if isinstance(x, (tuple, list)):
        return " ".join(format_value(v) for v in x)
    return str(x)


def write_csv(rows: Iterable[dict], path, fields: Sequence[str] | None = None):
    """Rows of dicts; floats are written with 17 significant digits."""
    rows = list(rows)
    fields = list(fields or (rows[0].keys() if rows else []))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([format_value(r.get(f, "")) for f in fields])


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
