"""Whittle-index transmission scheduling for wireless networks with spatial reuse."""

from .dynamics import UserParams, step_queue
from .policies import AlohaPolicy, IdlePolicy, LyapunovPolicy, MWSPolicy, WhittlePolicy
from .sim import Metrics, SimConfig, run_simulation
from .topology import NetworkGraph, generate_geometric_graph
from .whittle import CLIQUE, SolveConfig, TaxModel, build_index_table, compute_index

__version__ = "0.1.0"

__all__ = [
    "AlohaPolicy", "CLIQUE", "IdlePolicy", "LyapunovPolicy", "MWSPolicy", "Metrics",
    "NetworkGraph", "SimConfig", "SolveConfig", "TaxModel", "UserParams", "WhittlePolicy",
    "build_index_table", "compute_index", "generate_geometric_graph", "run_simulation",
    "step_queue",
]
