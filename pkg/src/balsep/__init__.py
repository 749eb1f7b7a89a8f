"""Balanced separators via matrix multiplicative weights with a chaining-based oracle."""

__version__ = "0.1.0"

from .graph import Cut, Graph, dumbbell, load_graph, read_graph
from .mw import SolverConfig, solve_balanced_separator

__all__ = ["Cut", "Graph", "SolverConfig", "dumbbell", "load_graph", "read_graph",
           "solve_balanced_separator", "__version__"]
