"""Query-propagation simulator for referring video object segmentation."""

from qprop.detector import OracleParams, Prediction, detect
from qprop.geometry import Box, Mask
from qprop.losses import MatchCostWeights, matching_cost
from qprop.matching import Assignment, best_match_frame, best_match_sequence
from qprop.metrics import MetricsReport, boundary_f, dataset_aggregates, region_similarity
from qprop.propagation import Method, PropagationConfig, QueryState, init_queries, propagate, select_query
from qprop.runner import RunTrace, ablation_suite, run_online, run_semi_online
from qprop.scenario import ScenarioSpec, builtin_suites, generate, make_scenario

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "Box",
    "Mask",
    "MatchCostWeights",
    "Method",
    "MetricsReport",
    "OracleParams",
    "Prediction",
    "PropagationConfig",
    "QueryState",
    "RunTrace",
    "ScenarioSpec",
    "ablation_suite",
    "best_match_frame",
    "best_match_sequence",
    "boundary_f",
    "builtin_suites",
    "dataset_aggregates",
    "detect",
    "generate",
    "init_queries",
    "make_scenario",
    "matching_cost",
    "propagate",
    "region_similarity",
    "run_online",
    "run_semi_online",
    "select_query",
]
