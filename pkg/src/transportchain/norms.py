"""Trapezoidal grid norms: L2, discrete H1 and weighted space-time norms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import StateField, Trajectory
from .errors import BadIntervalError, BadParamError, EmptyTrajectoryError

__all__ = ["WeightSpec", "h1", "l2", "weighted_l2", "weighted_l2_spacetime"]


@dataclass(frozen=True)
class WeightSpec:
    """Exponential weight exp(mu * |omega - center|) applied to fields."""

    mu: float
    center: float

    def __post_init__(self):
        if self.mu < 0:
            raise BadParamError(f"weight exponent must be >= 0, got {self.mu}")

    def on(self, nodes: np.ndarray) -> np.ndarray:
        return np.exp(self.mu * np.abs(nodes - self.center))


def _interval_slice(fld: StateField, interval) -> slice:
    if interval is None:
        return slice(0, fld.grid.n + 1)
    lo, hi = interval
    if not (0.0 <= lo < hi <= fld.grid.L):
        raise BadIntervalError(
            f"interval ({lo}, {hi}) must satisfy 0 <= lo < hi <= {fld.grid.L}"
        )
    i0 = fld.grid.index_of(lo)
    i1 = fld.grid.index_of(hi)
    return slice(i0, i1 + 1)


def l2(fld: StateField, interval: tuple[float, float] | None = None) -> float:
    """Trapezoidal L2 norm, optionally on a node-aligned subinterval."""
    sl = _interval_slice(fld, interval)
    return float(np.sqrt(np.trapezoid(fld.values[sl] ** 2, dx=fld.grid.h)))


def h1(fld: StateField, interval: tuple[float, float] | None = None) -> float:
    """Discrete H1 norm: sqrt(l2^2 + l2(D x)^2) with one-sided edges.

    The derivative uses central quotients inside the interval and
    second-order one-sided quotients at its two ends, so fields that are
    smooth only on a subdomain can be measured without differencing
    across an access point.
    """
    sl = _interval_slice(fld, interval)
    vals = fld.values[sl]
    if vals.size < 3:
        raise BadIntervalError("H1 norm needs at least three nodes")
    deriv = np.gradient(vals, fld.grid.h, edge_order=2)
    sq = np.trapezoid(vals**2, dx=fld.grid.h) + np.trapezoid(
        deriv**2, dx=fld.grid.h
    )
    return float(np.sqrt(sq))


def weighted_l2(fld: StateField, weight: WeightSpec) -> float:
    """L2 norm of the pointwise-weighted field over the full domain."""
    scaled = weight.on(fld.grid.nodes) * fld.values
    return float(np.sqrt(np.trapezoid(scaled**2, dx=fld.grid.h)))


def weighted_l2_spacetime(traj: Trajectory, weight: WeightSpec) -> float:
    """Space-time L2 norm of the weighted field, trapezoidal in both axes."""
    if traj.n_times < 2:
        raise EmptyTrajectoryError(
            "space-time norm needs at least two stored time slices"
        )
    w2 = weight.on(traj.grid.nodes) ** 2
    per_slice = np.trapezoid(traj.fields**2 * w2, dx=traj.grid.h, axis=1)
    return float(np.sqrt(np.trapezoid(per_slice, x=traj.times)))
