"""Relational message passing on graphs, cell complexes and higher-order structures."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .core import (ADJACENCY_KINDS, NULL_ENTITY, Cell, Complex, Graph, Relation, RelationalStructure,
                   StructureError, adjacencies, to_relational)
from .influence import (InfluenceMatrices, ShiftOperator, WeightedDigraph, aggregate_influence, collapsed_adjacency,
                        collapsed_graph, depth_bound, hidden_dim_bound, indicator_shifts, influence_graph,
                        normalize_rows, sensitivity_bound)
from .lift import GraphLifter, LiftConfig, Lifted, lift, lift_clique, lift_higher_order, lift_none, lift_ring
from .rewire import RelationalRewirer, RewireConfig, relational_rewire

__all__ = [
    "ADJACENCY_KINDS", "NULL_ENTITY", "Cell", "Complex", "Graph", "Relation", "RelationalStructure",
    "StructureError", "adjacencies", "to_relational", "InfluenceMatrices", "ShiftOperator", "WeightedDigraph",
    "aggregate_influence", "collapsed_adjacency", "collapsed_graph", "depth_bound", "hidden_dim_bound",
    "indicator_shifts", "influence_graph", "normalize_rows", "sensitivity_bound", "GraphLifter", "LiftConfig",
    "Lifted", "lift", "lift_clique", "lift_higher_order", "lift_none", "lift_ring", "RelationalRewirer",
    "RewireConfig", "relational_rewire",
]
