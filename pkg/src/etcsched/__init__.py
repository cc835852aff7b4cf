"""Conflict-free scheduling of event-triggered control loops over a shared
network, via timed-game abstraction, safety-game synthesis and co-simulation.
"""

from .backend import NUMBA_ENABLED, backend_name
from .zones import Bound, Federation, Zone, fed_leq, fed_subtract, pred_t

__all__ = [
    "NUMBA_ENABLED",
    "backend_name",
    "Bound",
    "Zone",
    "Federation",
    "fed_subtract",
    "fed_leq",
    "pred_t",
]

__version__ = "0.1.0"
