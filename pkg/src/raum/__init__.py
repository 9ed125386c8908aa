"""Random attention and utility models: testing, identification and counterfactuals."""

from .analysis import (
    Bound,
    NoRepresentation,
    RaumProblem,
    Verdict,
    check_prop2,
    irregular_triples,
    predict_bounds,
    preference_bounds,
    restrict_orders,
    test_raum,
    welfare_bounds,
    welfare_of_rule,
)
from .constraints import ConstraintSystem, build_system, count_system, system_stats
from .core import (
    ChoiceDataset,
    PreferenceOrder,
    RaumRule,
    Universe,
    best,
    choice_prob,
    enumerate_orders,
    enumerate_sets,
    validate_rule,
)
from .lp import LpResult, projection_distance, solve_feasibility, solve_linear

__version__ = "0.1.0"

__all__ = [
    "Bound",
    "ChoiceDataset",
    "ConstraintSystem",
    "LpResult",
    "NoRepresentation",
    "PreferenceOrder",
    "RaumProblem",
    "RaumRule",
    "Universe",
    "Verdict",
    "best",
    "build_system",
    "check_prop2",
    "choice_prob",
    "count_system",
    "enumerate_orders",
    "enumerate_sets",
    "irregular_triples",
    "predict_bounds",
    "preference_bounds",
    "projection_distance",
    "restrict_orders",
    "solve_feasibility",
    "solve_linear",
    "system_stats",
    "test_raum",
    "validate_rule",
    "welfare_bounds",
    "welfare_of_rule",
]
