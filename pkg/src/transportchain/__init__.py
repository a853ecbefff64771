"""Simulation, stabilization and optimal control for transport-equation chains."""

from .core import (
    ChainLayout,
    ControlSignal,
    SpatialGrid,
    StateField,
    Trajectory,
    build_chain,
    bump_initial,
    equidistant_layout,
    midpoint_layout,
    restrict,
)
from .errors import ChainError

__version__ = "0.1.0"

__all__ = [
    "ChainError",
    "ChainLayout",
    "ControlSignal",
    "SpatialGrid",
    "StateField",
    "Trajectory",
    "build_chain",
    "bump_initial",
    "equidistant_layout",
    "midpoint_layout",
    "restrict",
    "__version__",
]
