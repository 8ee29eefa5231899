"""Event-triggered dynamic average consensus with a learned, shared trigger network."""

from .analysis import (BoundReport, TriggerGuaranteeReport, SweepSummary, check_trigger_guarantees,
                       check_disagreement_bound, lambda_sweep_summary, linear_bound)
from .config import ConfigError, RunConfig
from .estimator import NeuralEventTrigger
from .etm import FUZZY, HARD, AgentState, TriggerDecision, TriggerPolicy, inter_event_statistics
from .fuzzy import backward, fuzzy_rollout
from .graph import (GraphError, NetworkGraph, build_graph, complete_graph, jacobi_eigenvalues,
                    make_graph, path_graph, random_connected_graph, ring_graph)
from .neural import Adam, Mlp, WeightFileError, load_weights, save_weights
from .protocols import (LINEAR, SLIDING, BatchRollout, ProtocolConfig, RolloutResult,
                        full_communication_rollout, simulate)
from .signals import SignalBatch, generate_sinusoid_batch, load_batch_csv, save_batch_csv
from .training import (CostBreakdown, NumericalFailure, TrainingRun, baseline_errors,
                       compute_cost, pretrain, train)

__version__ = "0.1.0"

__all__ = [
    "BoundReport", "TriggerGuaranteeReport", "SweepSummary", "check_trigger_guarantees",
    "check_disagreement_bound", "lambda_sweep_summary", "linear_bound", "ConfigError", "RunConfig",
    "NeuralEventTrigger", "FUZZY", "HARD", "AgentState", "TriggerDecision", "TriggerPolicy",
    "inter_event_statistics", "backward", "fuzzy_rollout", "GraphError", "NetworkGraph",
    "build_graph", "complete_graph", "jacobi_eigenvalues", "make_graph", "path_graph",
    "random_connected_graph", "ring_graph", "Adam", "Mlp", "WeightFileError", "load_weights",
    "save_weights", "LINEAR", "SLIDING", "BatchRollout", "ProtocolConfig", "RolloutResult",
    "full_communication_rollout", "simulate", "SignalBatch", "generate_sinusoid_batch",
    "load_batch_csv", "save_batch_csv", "CostBreakdown", "NumericalFailure", "TrainingRun",
    "baseline_errors", "compute_cost", "pretrain", "train",
]
