"""Recourse actions that stay valid under shifts of a linear classifier.

Given an input the current model rejects, the solver looks for a nearby
action that keeps a low worst-case probability of rejection when the model
parameters are redrawn from a mixture of shift scenarios, each known only
through approximate moments.  Closed-form worst-case probabilities turn
the min-max problem into a smooth objective minimized by projected
gradient descent over a convex feasible set.
"""

from .errors import RecourseError
from .model import (
    ActionabilitySpec,
    ComponentMoments,
    Cost,
    Divergence,
    FeatureVector,
    LinearClassifier,
    MixtureBelief,
    Mode,
    RecourseProblem,
    RecourseResult,
    validate_problem,
)
from .optimizer import SolverConfig, solve, stationarity

__version__ = "0.1.0"

__all__ = [
    "ActionabilitySpec",
    "ComponentMoments",
    "Cost",
    "Divergence",
    "FeatureVector",
    "LinearClassifier",
    "MixtureBelief",
    "Mode",
    "RecourseError",
    "RecourseProblem",
    "RecourseResult",
    "SolverConfig",
    "solve",
    "stationarity",
    "validate_problem",
]
