"""Flat-input tracking control for smooth SISO systems.

Builds the flat-input vector field of an observable plant, realizes it with
a discrete dynamic compensator, and closes the loop with a feedforward or
feedback-linearizing tracking law. The variable-length pendulum is the worked
instance.
"""

from .control import (
    ControllerGains,
    Hold,
    Poly7,
    ReferenceJet,
    ReferenceTrajectory,
    CompensatorState,
    feedback_linearize,
    feedforward_flat_input,
    hurwitz_check,
    reference_jet,
)
from .core import (
    FlatInputSystem,
    ObservabilityData,
    SmoothSisoSystem,
    construct_flat_input,
    lie_derivatives,
    observability_matrix,
    verify_flat_input,
)
from .sim import SimConfig, SimulationTrace, io_equivalence_run, rk4_step, run_closed_loop

__version__ = "0.1.0"

__all__ = [
    "CompensatorState",
    "ControllerGains",
    "FlatInputSystem",
    "Hold",
    "ObservabilityData",
    "Poly7",
    "ReferenceJet",
    "ReferenceTrajectory",
    "SimConfig",
    "SimulationTrace",
    "SmoothSisoSystem",
    "construct_flat_input",
    "feedback_linearize",
    "feedforward_flat_input",
    "hurwitz_check",
    "io_equivalence_run",
    "lie_derivatives",
    "observability_matrix",
    "reference_jet",
    "rk4_step",
    "run_closed_loop",
    "verify_flat_input",
]
