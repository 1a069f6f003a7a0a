"""Exact simulation and verification harness for reaction-diffusion
interacting particle systems on graphs."""

__version__ = "0.1.0"

from .configuration import Configuration, ScaledConfiguration, alpha_distance, alpha_norm, leq, one_norm
from .engine import EngineConfig, Mark, Trajectory, run_coupled_pair, run_flow, run_truncation_ladder
from .graph_kernel import finite_complete, finite_path, make_graph, self_loop, torus, zd_nn
from .reaction import ReactionFamily, TabulatedReaction, validate_reaction
from .streams import EventStream

__all__ = [
    "Configuration",
    "ScaledConfiguration",
    "alpha_distance",
    "alpha_norm",
    "leq",
    "one_norm",
    "EngineConfig",
    "Mark",
    "Trajectory",
    "run_coupled_pair",
    "run_flow",
    "run_truncation_ladder",
    "finite_complete",
    "finite_path",
    "make_graph",
    "self_loop",
    "torus",
    "zd_nn",
    "ReactionFamily",
    "TabulatedReaction",
    "validate_reaction",
    "EventStream",
]
