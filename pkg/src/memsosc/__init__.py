"""Toolkit for a forced parallel-plate MEMS oscillator.

Closed-form existence/pull-in criteria, a stroboscopic Poincare map engine
for periodic orbits and Floquet stability, basins of attraction, and
critical-damping bifurcation detection.
"""

from .model import (
    CUSTOM,
    GRAPHENE,
    LINEAR,
    CustomStiffness,
    ModelParams,
    PhysicalParams,
    SingularStateError,
    State,
    nondimensionalize,
    rhs,
    voltage,
    voltage_extrema,
)
from .integrator import (
    IntegratorConfig,
    StepUnderflowError,
    StrobeResult,
    TrajectoryOutcome,
    integrate,
    strobe,
)

__all__ = [
    "CUSTOM", "GRAPHENE", "LINEAR", "CustomStiffness", "ModelParams",
    "PhysicalParams", "SingularStateError", "State", "nondimensionalize",
    "rhs", "voltage", "voltage_extrema",
    "IntegratorConfig", "StepUnderflowError", "StrobeResult",
    "TrajectoryOutcome", "integrate", "strobe",
]

__version__ = "0.1.0"
