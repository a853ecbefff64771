"""Chain geometry, uniform grids, discrete fields and control signals.

A chain couples scalar transport equations on consecutive subdomains
(a_{i-1}, a_i] of (0, L); every access point a_{i-1} < L feeds one
control channel.  Only the first N_L access points matter for a domain
of length L, where N_L is the smallest index with a_{N_L} >= L.  All
solvers operate on uniform grids whose nodes contain the access points,
so geometry and alignment validation is centralized here.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import (
    BadIntervalError,
    BadParamError,
    GridMisalignedError,
    GridMismatchError,
    NonMonotoneError,
    SupportOutOfDomainError,
    UncoveredError,
)

__all__ = [
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
]

#: relative tolerance for "this coordinate sits on a grid node" checks
ALIGN_RTOL = 1e-9


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise BadParamError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class ChainLayout:
    """Access-point chain over the domain (0, L) with transport speed c.

    Parameters
    ----------
    access_points : tuple of float
        Strictly increasing coordinates a_0 = 0 < a_1 < ...  Points past
        the first one that reaches L are kept but do not affect the
        active chain.
    L : float
        Domain length.
    c : float
        Transport speed, positive.
    """

    access_points: tuple[float, ...]
    L: float
    c: float

    def __post_init__(self):
        pts = tuple(float(a) for a in self.access_points)
        object.__setattr__(self, "access_points", pts)
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "c", float(self.c))
        if self.L <= 0:
            raise BadParamError(f"domain length must be positive, got {self.L}")
        if self.c <= 0:
            raise BadParamError(f"transport speed must be positive, got {self.c}")
        if not pts:
            raise BadParamError("need at least one access point")
        if not all(math.isfinite(a) for a in pts):
            raise BadParamError("access points contain non-finite entries")
        if pts[0] != 0.0:
            raise BadParamError(f"first access point must be 0, got {pts[0]}")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise NonMonotoneError("access points must be strictly increasing")
        if pts[-1] < self.L:
            raise UncoveredError(
                f"last access point {pts[-1]} does not reach L={self.L}; "
                "the final subdomain would be unbounded"
            )

    @cached_property
    def n_l(self) -> int:
        """Number of active subdomains: smallest i with a_i >= L."""
        for i, a in enumerate(self.access_points):
            if a >= self.L:
                return i
        raise UncoveredError("no access point reaches L")  # unreachable

    @cached_property
    def subdomains(self) -> tuple[tuple[float, float], ...]:
        """Active subdomains (a_{i-1}, min(a_i, L)] for i = 1..N_L."""
        pts = self.access_points
        return tuple(
            (pts[i], min(pts[i + 1], self.L)) for i in range(self.n_l)
        )

    @cached_property
    def gaps(self) -> tuple[float, ...]:
        """Access-point spacings a_i - a_{i-1} for the active chain."""
        pts = self.access_points
        return tuple(pts[i + 1] - pts[i] for i in range(self.n_l))

    @cached_property
    def delta(self) -> float:
        """Smallest active gap; sets the feedback ramp time delta/c."""
        return min(self.gaps)

    @cached_property
    def max_gap(self) -> float:
        return max(self.gaps)

    @property
    def n_channels(self) -> int:
        """One control channel per access point a_{i-1} < L."""
        return self.n_l

    @property
    def controlled_points(self) -> tuple[float, ...]:
        """Coordinates a_0, ..., a_{N_L - 1} where controls enter."""
        return self.access_points[: self.n_l]

    def subdomain_index(self, omega: float) -> int:
        """Index i in 1..N_L with omega in (a_{i-1}, a_i]; 1 for omega <= 0."""
        if omega > self.L:
            raise BadIntervalError(f"{omega} outside domain [0, {self.L}]")
        pts = self.access_points
        for i in range(1, self.n_l + 1):
            if omega <= pts[i]:
                return i
        return self.n_l

    def to_json(self) -> str:
        return json.dumps(
            {"access_points": list(self.access_points), "L": self.L, "c": self.c}
        )

    @classmethod
    def from_json(cls, text: str) -> "ChainLayout":
        data = json.loads(text)
        return cls(tuple(data["access_points"]), data["L"], data["c"])


def build_chain(access_points: Iterable[float], L: float, c: float) -> ChainLayout:
    """Validate a chain layout and precompute its active-subdomain data."""
    return ChainLayout(tuple(access_points), L, c)


def equidistant_layout(gap: float, L: float, c: float) -> ChainLayout:
    """Chain with a_i = i * gap, truncated at the first point >= L."""
    if gap <= 0:
        raise BadParamError(f"gap must be positive, got {gap}")
    n = math.ceil(L / gap - ALIGN_RTOL)
    pts = tuple(i * gap for i in range(n + 1))
    return ChainLayout(pts, L, c)


def midpoint_layout(L: float, c: float) -> ChainLayout:
    """Chain with access points at 0 and L/2 only."""
    return ChainLayout((0.0, L / 2.0, L), L, c)


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid 0 = w_0 < ... < w_n = L with spacing h."""

    L: float
    h: float
    n: int

    def __post_init__(self):
        if self.L <= 0 or self.h <= 0 or self.n < 1:
            raise BadParamError("grid needs L > 0, h > 0, n >= 1")
        if abs(self.n * self.h - self.L) > ALIGN_RTOL * self.L:
            raise GridMisalignedError(
                f"h={self.h} does not divide L={self.L} into {self.n} cells"
            )

    @classmethod
    def uniform(cls, L: float, h: float) -> "SpatialGrid":
        n = int(round(L / h))
        if n < 1 or abs(n * h - L) > ALIGN_RTOL * L:
            raise GridMisalignedError(f"h={h} does not evenly divide L={L}")
        return cls(float(L), float(h), n)

    @cached_property
    def nodes(self) -> np.ndarray:
        arr = np.linspace(0.0, self.L, self.n + 1)
        arr.flags.writeable = False
        return arr

    def index_of(self, omega: float) -> int:
        """Node index of a coordinate that must lie on the grid."""
        idx = int(round(omega / self.h))
        if idx < 0 or idx > self.n or abs(idx * self.h - omega) > ALIGN_RTOL * self.L:
            raise GridMisalignedError(f"{omega} is not a node of this grid")
        return idx

    def aligned_with(self, layout: ChainLayout) -> bool:
        """True when every active access point sits on a grid node."""
        if abs(layout.L - self.L) > ALIGN_RTOL * self.L:
            return False
        try:
            for a in layout.controlled_points:
                self.index_of(a)
        except GridMisalignedError:
            return False
        return True

    def require_alignment(self, layout: ChainLayout) -> None:
        if not self.aligned_with(layout):
            raise GridMisalignedError(
                "grid nodes do not contain all active access points"
            )


def _freeze(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float, order="C")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class StateField:
    """Grid samples of a scalar field on [0, L]."""

    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.values, "field values")
        if arr.shape != (self.grid.n + 1,):
            raise GridMismatchError(
                f"expected {self.grid.n + 1} samples, got {arr.shape}"
            )
        object.__setattr__(self, "values", _freeze(arr))

    def interp(self, omega) -> np.ndarray:
        """Linear interpolation; the field is extended by zero off [0, L]."""
        w = np.asarray(omega, dtype=float)
        out = np.interp(w, self.grid.nodes, self.values, left=0.0, right=0.0)
        return out

    def l2(self) -> float:
        """Trapezoidal L2 norm over the full domain."""
        return float(np.sqrt(np.trapezoid(self.values**2, dx=self.grid.h)))

    def to_json(self) -> str:
        return json.dumps({"h": self.grid.h, "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "StateField":
        data = json.loads(text)
        values = np.asarray(data["values"], dtype=float)
        grid = SpatialGrid(float(data["h"]) * (len(values) - 1), float(data["h"]),
                           len(values) - 1)
        return cls(grid, values)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["omega", "value"])
            for w, v in zip(self.grid.nodes, self.values):
                writer.writerow([f"{w:.17g}", f"{v:.17g}"])


@dataclass(frozen=True)
class ControlSignal:
    """Per-channel control samples on a uniform time grid starting at 0.

    Row j holds channel i = j + 1, the input entering at access point
    a_j.  Channel numbering in the public accessors is one-based to
    match the subdomain numbering.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = _as_float_array(self.times, "control times")
        v = _as_float_array(self.values, "control values")
        if t.ndim != 1 or t.size < 2:
            raise BadParamError("control needs at least two time samples")
        if t[0] != 0.0:
            raise BadParamError("control time grid must start at 0")
        steps = np.diff(t)
        tau = steps[0]
        if tau <= 0 or np.any(np.abs(steps - tau) > ALIGN_RTOL * tau):
            raise BadParamError("control time grid must be uniform and increasing")
        if v.ndim != 2 or v.shape[1] != t.size:
            raise GridMismatchError(
                f"control values must be (channels, {t.size}), got {v.shape}"
            )
        object.__setattr__(self, "times", _freeze(t))
        object.__setattr__(self, "values", _freeze(v))

    @property
    def tau(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @classmethod
    def zeros(cls, n_channels: int, horizon: float, tau: float) -> "ControlSignal":
        n_steps = int(round(horizon / tau))
        if n_steps < 1 or abs(n_steps * tau - horizon) > ALIGN_RTOL * horizon:
            raise BadParamError(f"tau={tau} does not divide horizon={horizon}")
        times = np.linspace(0.0, horizon, n_steps + 1)
        return cls(times, np.zeros((n_channels, n_steps + 1)))

    def channel(self, i: int) -> np.ndarray:
        """Samples of channel i (one-based, entering at a_{i-1})."""
        if not 1 <= i <= self.n_channels:
            raise BadParamError(f"channel {i} out of range 1..{self.n_channels}")
        return self.values[i - 1]

    def interp(self, i: int, t) -> np.ndarray:
        """Channel i at arbitrary times; zero before 0, clamped past T."""
        s = np.maximum(np.asarray(t, dtype=float), 0.0)
        return np.interp(s, self.times, self.channel(i))


@dataclass(frozen=True)
class Trajectory:
    """Stored time slices of a field, optionally with the control used.

    When a control is attached its time grid must coincide with the
    stored slice times.
    """

    grid: SpatialGrid
    times: np.ndarray
    fields: np.ndarray
    control: ControlSignal | None = None

    def __post_init__(self):
        t = _as_float_array(self.times, "trajectory times")
        f = _as_float_array(self.fields, "trajectory fields")
        if t.ndim != 1 or t.size == 0:
            raise BadParamError("trajectory needs at least one time slice")
        if np.any(np.diff(t) <= 0):
            raise BadParamError("trajectory times must be strictly increasing")
        if f.shape != (t.size, self.grid.n + 1):
            raise GridMismatchError(
                f"fields must be ({t.size}, {self.grid.n + 1}), got {f.shape}"
            )
        if self.control is not None:
            if self.control.times.size != t.size or np.any(
                np.abs(self.control.times - t) > ALIGN_RTOL * max(1.0, t[-1])
            ):
                raise GridMismatchError(
                    "control and trajectory time grids must coincide"
                )
        object.__setattr__(self, "times", _freeze(t))
        object.__setattr__(self, "fields", _freeze(f))

    @property
    def n_times(self) -> int:
        return self.times.size

    def field_at(self, k: int) -> StateField:
        return StateField(self.grid, self.fields[k])

    def to_json(self) -> str:
        return json.dumps(
            {"times": self.times.tolist(), "fields": self.fields.tolist()}
        )

    @classmethod
    def from_json(cls, text: str, grid: SpatialGrid) -> "Trajectory":
        data = json.loads(text)
        return cls(grid, np.asarray(data["times"]), np.asarray(data["fields"]))

    def to_csv(self, path) -> None:
        """Rows t, omega, value; one row per stored node sample."""
        nodes = self.grid.nodes
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "omega", "value"])
            for t, row in zip(self.times, self.fields):
                ts = f"{t:.17g}"
                for w, v in zip(nodes, row):
                    writer.writerow([ts, f"{w:.17g}", f"{v:.17g}"])


def bump_initial(eps1: float, eps2: float, grid: SpatialGrid) -> StateField:
    """Smooth bump exp(mu(w)) supported on (eps1 - eps2/2, eps1 + eps2/2).

    mu(w) = 1 + 1 / ((2 (w - eps1) / eps2)^2 - 1) inside the support and
    the field is zero outside; the peak value is 1 at w = eps1.
    """
    if eps2 <= 0:
        raise BadParamError(f"support width must be positive, got {eps2}")
    lo, hi = eps1 - eps2 / 2, eps1 + eps2 / 2
    if lo < 0 or hi > grid.L:
        raise SupportOutOfDomainError(
            f"bump support ({lo}, {hi}) sticks out of [0, {grid.L}]"
        )
    w = grid.nodes
    z = 2.0 * (w - eps1) / eps2
    values = np.zeros_like(w)
    inside = np.abs(z) < 1.0
    values[inside] = np.exp(1.0 + 1.0 / (z[inside] ** 2 - 1.0))
    return StateField(grid, values)


def restrict(fld: StateField, interval: tuple[float, float]) -> StateField:
    """Zero a field outside the closed interval [lo, hi]."""
    lo, hi = interval
    if not (0.0 <= lo < hi <= fld.grid.L):
        raise BadIntervalError(
            f"interval ({lo}, {hi}) must satisfy 0 <= lo < hi <= {fld.grid.L}"
        )
    w = fld.grid.nodes
    values = np.where((w >= lo) & (w <= hi), fld.values, 0.0)
    return StateField(fld.grid, values)
