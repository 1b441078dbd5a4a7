"""Total acquisition on random geometric graphs: sampling, protocols, bounds and sweeps."""

from .engine import (
    AdjacencyGraph,
    IllegalMove,
    IllegalMoveAt,
    Move,
    Protocol,
    WeightState,
    apply_move,
    check_weight_caps,
    is_maximal,
    replay,
)
from .rgg import GeometricGraph, PointSet, from_points, load_graph, sample_fixed_n, sample_poisson, save_graph

__version__ = "0.1.0"

__all__ = [
    "AdjacencyGraph", "GeometricGraph", "IllegalMove", "IllegalMoveAt", "Move", "PointSet",
    "Protocol", "WeightState", "apply_move", "check_weight_caps", "from_points", "is_maximal",
    "load_graph", "replay", "sample_fixed_n", "sample_poisson", "save_graph",
]
