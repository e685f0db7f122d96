"""Hybrid inclusions: simulation, sampled reachable sets, (tau, eps)-closeness and
sampled checks of well-posedness and viability conditions."""
from .core import HybridArc, HybridSystem, PerturbationFamily, rho_inflate
from .definitions import load_definition, load_system
from .expr import parse_expr
from .reach import ReachCloud, ReachConfig, hausdorff, reach, reach_interval
from .schedule import ProbeSchedule
from .simulate import SolvePolicy, solve, solve_tree

__version__ = "0.1.0"

__all__ = [
    "HybridArc", "HybridSystem", "PerturbationFamily", "rho_inflate", "load_definition", "load_system",
    "parse_expr", "ReachCloud", "ReachConfig", "hausdorff", "reach", "reach_interval", "ProbeSchedule",
    "SolvePolicy", "solve", "solve_tree",
]
