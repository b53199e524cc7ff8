"""Learned large neighborhood search for binary integer programs."""

from .core import IncumbentTracker, IpInstance, Solution, evaluate, is_feasible

__all__ = [
    "IpInstance",
    "Solution",
    "IncumbentTracker",
    "evaluate",
    "is_feasible",
]
__version__ = "0.1.0"
