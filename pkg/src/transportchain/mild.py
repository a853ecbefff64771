"""Exact mild solutions of the open-loop chain via characteristic trace-back.

Transport moves values to the right at speed c, so the solution at
(omega, t) inside subdomain i is determined by tracing the
characteristic back: either it exits the swept region and reads shifted
initial data, or it hits the access point a_{i-1} at the retarded time
s = t - (omega - a_{i-1})/c and reads the predecessor's boundary trace
plus the control.  With Dirichlet coupling the trace recursion acts on
values; with Neumann coupling it acts on spatial derivatives, and the
boundary value is recovered by time-integrating the aggregate input
v_i(t) = d/dw x_{i-1}(a_{i-1}, t) + u_i(t).

Problems fix the unit-CFL relation c*tau = h between the control time
grid and the spatial grid so every retarded grid time is again a grid
time; off-grid query times use linear interpolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import kernels
from .core import ALIGN_RTOL, ChainLayout, ControlSignal, SpatialGrid, StateField, Trajectory
from .errors import (
    BadParamError,
    BcMismatchError,
    GridMisalignedError,
    GridMismatchError,
    NegativeTimeError,
)

__all__ = [
    "OpenLoopProblem",
    "aggregate_inputs",
    "autonomous_solution",
    "controlled_support",
    "dirichlet_solution",
    "neumann_solution",
    "trajectory",
    "transformed_inputs",
    "upwind_solution",
]

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


@dataclass(frozen=True)
class OpenLoopProblem:
    """Chain, initial value, coupling kind and control for one experiment.

    The control time grid must satisfy c * tau = h so that access-point
    transit times are whole numbers of steps.
    """

    layout: ChainLayout
    x0: StateField
    bc: str
    control: ControlSignal

    def __post_init__(self):
        object.__setattr__(self, "bc", str(self.bc).lower())
        if self.bc not in (DIRICHLET, NEUMANN):
            raise BcMismatchError(
                f"bc must be {DIRICHLET!r} or {NEUMANN!r}, got {self.bc!r}"
            )
        self.x0.grid.require_alignment(self.layout)
        if self.control.n_channels != self.layout.n_l:
            raise GridMismatchError(
                f"control has {self.control.n_channels} channels, "
                f"layout needs {self.layout.n_l}"
            )
        h, c, tau = self.x0.grid.h, self.layout.c, self.control.tau
        if abs(c * tau - h) > ALIGN_RTOL * h:
            raise GridMisalignedError(
                f"need unit CFL c*tau = h, got c*tau = {c * tau}, h = {h}"
            )

    @property
    def grid(self) -> SpatialGrid:
        return self.x0.grid

    @cached_property
    def _sub_slices(self) -> list[slice]:
        """Node-index slice of each subdomain; node(a_{i-1}) belongs to
        subdomain i-1 except node 0, which is carried by subdomain 1."""
        grid, layout = self.grid, self.layout
        slices = []
        for i, (lo, hi) in enumerate(layout.subdomains):
            start = grid.index_of(lo) + (1 if i > 0 else 0)
            slices.append(slice(start, grid.index_of(hi) + 1))
        return slices

    @cached_property
    def _gap_steps(self) -> list[int]:
        """Transit time of each subdomain in whole grid steps."""
        grid = self.grid
        return [
            grid.index_of(hi) - grid.index_of(lo)
            for lo, hi in self.layout.subdomains
        ]

    def _check_time(self, t: float) -> float:
        t = float(t)
        if t < 0:
            raise NegativeTimeError(f"evaluation time must be >= 0, got {t}")
        horizon = self.control.horizon
        if t > horizon * (1 + ALIGN_RTOL):
            raise BadParamError(
                f"time {t} exceeds the control horizon {horizon}"
            )
        return t

    @cached_property
    def _value_traces(self) -> np.ndarray:
        """Dirichlet boundary traces: row j holds x_j(a_j, t_k) for
        j = 0..N_L-1 (row 0 is the phantom upstream trace, identically 0)."""
        layout, grid, control = self.layout, self.grid, self.control
        times = control.times
        n_t = times.size
        rows = np.zeros((layout.n_l, n_t))
        pts = layout.access_points
        for j in range(1, layout.n_l):
            m_j = self._gap_steps[j - 1]
            ks = np.arange(n_t)
            row = np.empty(n_t)
            unswept = ks < m_j
            row[unswept] = self.x0.interp(pts[j] - layout.c * times[unswept])
            src = ks[~unswept] - m_j
            row[~unswept] = rows[j - 1, src] + control.values[j - 1, src]
            rows[j] = row
        return rows

    @cached_property
    def _x0_sub_derivatives(self) -> list[np.ndarray]:
        """Per-subdomain derivative of the initial value, one-sided at
        the subdomain edges (never differences across an access point)."""
        grid = self.grid
        out = []
        for sl, (lo, hi) in zip(self._node_ranges, self.layout.subdomains):
            vals = self.x0.values[sl]
            if vals.size < 3:
                raise GridMisalignedError(
                    "each subdomain needs at least three grid nodes"
                )
            out.append(np.gradient(vals, grid.h, edge_order=2))
        return out

    @cached_property
    def _node_ranges(self) -> list[slice]:
        """Closed node ranges [node(a_{i-1}), node(min(a_i, L))]."""
        grid = self.grid
        return [
            slice(grid.index_of(lo), grid.index_of(hi) + 1)
            for lo, hi in self.layout.subdomains
        ]

    @cached_property
    def _derivative_traces(self) -> np.ndarray:
        """Neumann trace recursion: row j holds d/dw x_j(a_j, t_k) for
        j = 0..N_L-1 (row 0 identically 0)."""
        layout, control = self.layout, self.control
        times = control.times
        n_t = times.size
        rows = np.zeros((layout.n_l, n_t))
        pts = layout.access_points
        for j in range(1, layout.n_l):
            m_j = self._gap_steps[j - 1]
            ks = np.arange(n_t)
            row = np.empty(n_t)
            unswept = ks < m_j
            sub_nodes = self.grid.nodes[self._node_ranges[j - 1]]
            row[unswept] = np.interp(
                pts[j] - layout.c * times[unswept],
                sub_nodes,
                self._x0_sub_derivatives[j - 1],
            )
            src = ks[~unswept] - m_j
            # v_j at the retarded time: predecessor derivative trace + u_j
            row[~unswept] = rows[j - 1, src] + control.values[j - 1, src]
            rows[j] = row
        return rows


def aggregate_inputs(problem: OpenLoopProblem) -> np.ndarray:
    """Neumann aggregate inputs v_i(t_k) = d/dw x_{i-1}(a_{i-1},t_k) + u_i(t_k).

    Returns an (N_L, K+1) array, channel i in row i-1.
    """
    if problem.bc != NEUMANN:
        raise BcMismatchError("aggregate inputs are defined for Neumann coupling")
    return problem._derivative_traces + problem.control.values


def transformed_inputs(problem: OpenLoopProblem) -> np.ndarray:
    """Equivalent Dirichlet data of a Neumann problem, per channel.

    Row i-1 holds x0(a_{i-1}) - c * integral_0^{t_k} v_i, the boundary
    value the Neumann coupling imposes at a_{i-1}; the integral uses
    trapezoidal quadrature on the control grid.
    """
    v = aggregate_inputs(problem)
    integ = cumulative_trapezoid(v, dx=problem.control.tau, axis=1, initial=0.0)
    starts = np.array(
        [problem.x0.values[problem.grid.index_of(a)]
         for a in problem.layout.controlled_points]
    )
    return starts[:, None] - problem.layout.c * integ


def _interp_time(times: np.ndarray, row: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.interp(np.maximum(s, 0.0), times, row)


def autonomous_solution(
    x0: StateField,
    t: float,
    bc: str = DIRICHLET,
    layout: ChainLayout | None = None,
    c: float | None = None,
) -> StateField:
    """Uncontrolled solution at time t.

    Without a layout the chain transmits traces transparently and the
    solution is the global shift: zero inflow (Dirichlet) or constant
    x0(0) inflow (Neumann) at the left boundary; the transport speed c
    must be supplied.  With a layout (speed taken from it), each
    subdomain evolves in isolation with zero (Dirichlet) or constant
    x0(a_{i-1}) (Neumann) inflow at its own left end, which is the
    semigroup generated by the uncoupled operator.
    """
    bc = str(bc).lower()
    if bc not in (DIRICHLET, NEUMANN):
        raise BcMismatchError(f"bc must be {DIRICHLET!r} or {NEUMANN!r}")
    t = float(t)
    if t < 0:
        raise NegativeTimeError(f"evaluation time must be >= 0, got {t}")
    if layout is not None:
        if c is not None and abs(c - layout.c) > ALIGN_RTOL * layout.c:
            raise BadParamError(
                f"speed {c} disagrees with the layout's c = {layout.c}"
            )
        c = layout.c
    elif c is None:
        raise BadParamError("supply a transport speed c when no layout is given")
    elif c <= 0:
        raise BadParamError(f"transport speed must be positive, got {c}")
    grid = x0.grid
    if t == 0.0:
        return StateField(grid, x0.values)
    w = grid.nodes
    shift_tol = ALIGN_RTOL * max(grid.L, grid.h)
    if layout is None:
        pieces = [(0.0, grid.L, 0)]
    else:
        grid.require_alignment(layout)
        pieces = [(lo, hi, i) for i, (lo, hi) in enumerate(layout.subdomains)]
    out = np.empty_like(w)
    for lo, hi, i in pieces:
        start = grid.index_of(lo) + (1 if i > 0 else 0)
        sl = slice(start, grid.index_of(hi) + 1)
        local = w[sl] - lo
        swept = local <= c * t + shift_tol
        inflow = 0.0 if bc == DIRICHLET else x0.interp(lo)
        out[sl] = np.where(swept, inflow, x0.interp(w[sl] - c * t))
    return StateField(grid, out)


def controlled_support(layout: ChainLayout, t: float) -> list[tuple[float, float]]:
    """Union of intervals (a_{i-1}, a_{i-1} + c t] hit by controls, merged.

    Returned intervals are half-open on the left, clipped to (0, L).
    """
    t = float(t)
    if t < 0:
        raise NegativeTimeError(f"time must be >= 0, got {t}")
    if t == 0.0:
        return []
    reach = layout.c * t
    raw = []
    for a in layout.controlled_points:
        hi = min(a + reach, layout.L)
        if hi > a:
            raw.append((a, hi))
    merged: list[list[float]] = []
    for lo, hi in sorted(raw):
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


def dirichlet_solution(problem: OpenLoopProblem, t: float) -> StateField:
    """Mild solution of the Dirichlet-coupled chain at time t.

    On the swept part of subdomain i the value is the predecessor trace
    plus the control, both at the retarded time; beyond it the initial
    data is shifted unchanged.
    """
    if problem.bc != DIRICHLET:
        raise BcMismatchError("problem does not use Dirichlet coupling")
    t = problem._check_time(t)
    grid, layout, control = problem.grid, problem.layout, problem.control
    if t == 0.0:
        return StateField(grid, problem.x0.values)
    traces = problem._value_traces
    w = grid.nodes
    out = np.empty_like(w)
    shift_tol = ALIGN_RTOL * max(grid.L, grid.h)
    for i, sl in enumerate(problem._sub_slices):
        lo = layout.access_points[i]
        local = w[sl] - lo
        s = t - local / layout.c
        swept = local <= layout.c * t + shift_tol
        vals = np.empty(local.shape)
        if np.any(swept):
            vals[swept] = _interp_time(control.times, traces[i], s[swept]) \
                + control.interp(i + 1, s[swept])
        if not np.all(swept):
            vals[~swept] = problem.x0.interp(w[sl][~swept] - layout.c * t)
        out[sl] = vals
    return StateField(grid, out)


def neumann_solution(problem: OpenLoopProblem, t: float) -> StateField:
    """Mild solution of the Neumann-coupled chain at time t.

    The swept part of subdomain i carries the transformed input
    (equivalent Dirichlet value) at the retarded time; beyond it the
    initial data is shifted unchanged.
    """
    if problem.bc != NEUMANN:
        raise BcMismatchError("problem does not use Neumann coupling")
    t = problem._check_time(t)
    grid, layout, control = problem.grid, problem.layout, problem.control
    if t == 0.0:
        return StateField(grid, problem.x0.values)
    frak = transformed_inputs(problem)
    w = grid.nodes
    out = np.empty_like(w)
    shift_tol = ALIGN_RTOL * max(grid.L, grid.h)
    for i, sl in enumerate(problem._sub_slices):
        lo = layout.access_points[i]
        local = w[sl] - lo
        s = t - local / layout.c
        swept = local <= layout.c * t + shift_tol
        vals = np.empty(local.shape)
        if np.any(swept):
            vals[swept] = _interp_time(control.times, frak[i], s[swept])
        if not np.all(swept):
            vals[~swept] = problem.x0.interp(w[sl][~swept] - layout.c * t)
        out[sl] = vals
    return StateField(grid, out)


def solution(problem: OpenLoopProblem, t: float) -> StateField:
    """Dispatch to the solver matching the problem's coupling kind."""
    if problem.bc == DIRICHLET:
        return dirichlet_solution(problem, t)
    return neumann_solution(problem, t)


def trajectory(problem: OpenLoopProblem, every: int = 1) -> Trajectory:
    """Sample the mild solution on the control time grid (stride every).

    With every == 1 the control is attached to the trajectory.
    """
    if every < 1:
        raise BadParamError(f"stride must be >= 1, got {every}")
    times = problem.control.times[::every]
    fields = np.stack([solution(problem, t).values for t in times])
    control = problem.control if every == 1 else None
    return Trajectory(problem.grid, times, fields, control)


def _upwind_steps(problem: OpenLoopProblem, t_final: float, cfl: float):
    if not 0 < cfl <= 1.0:
        raise BadParamError(f"upwind stability needs 0 < cfl <= 1, got {cfl}")
    h, c = problem.grid.h, problem.layout.c
    n_steps = max(1, math.ceil(t_final / (cfl * h / c) - 1e-9))
    tau = t_final / n_steps
    lam = c * tau / h
    return n_steps, tau, lam


def upwind_solution(
    problem: OpenLoopProblem, t_final: float | None = None, cfl: float = 1.0
) -> StateField:
    """First-order upwind reference solution at t_final.

    Independent of the trace-back formulas: marches the conservative
    upwind update with ghost values injecting the coupling condition at
    every access point.  At cfl = 1 the update degenerates to an exact
    shift; smaller cfl exhibits the scheme's O(h) diffusion.
    """
    t_final = problem._check_time(
        problem.control.horizon if t_final is None else t_final
    )
    if t_final == 0.0:
        return StateField(problem.grid, problem.x0.values)
    grid, layout, control = problem.grid, problem.layout, problem.control
    n_steps, tau, lam = _upwind_steps(problem, t_final, cfl)
    t_old = tau * np.arange(n_steps)
    t_new = tau * np.arange(1, n_steps + 1)
    first_nodes = np.array(
        [grid.index_of(a) + 1 for a in layout.controlled_points[1:]],
        dtype=np.int64,
    )
    weights = np.full(grid.n + 1, grid.h)
    weights[0] = weights[-1] = grid.h / 2

    if problem.bc == DIRICHLET:
        ghost_add = np.column_stack(
            [control.interp(j + 2, t_old) for j in range(layout.n_l - 1)]
        ) if layout.n_l > 1 else np.zeros((n_steps, 0))
        left_values = control.interp(1, t_new)
        final, _, _ = kernels.upwind_march(
            problem.x0.values, first_nodes, lam, ghost_add, left_values,
            weights, np.empty(0, dtype=np.int64),
        )
        return StateField(grid, final)
    return _upwind_neumann(problem, n_steps, tau, lam)


def _upwind_neumann(problem: OpenLoopProblem, n_steps: int, tau: float,
                    lam: float) -> StateField:
    """Upwind march with boundary values integrated from the couplings."""
    grid, layout, control = problem.grid, problem.layout, problem.control
    h, c = grid.h, layout.c
    x = np.array(problem.x0.values)
    pred_nodes = [grid.index_of(a) for a in layout.controlled_points]
    first_nodes = np.array([p + 1 for p in pred_nodes[1:]], dtype=np.int64)
    y = np.array([problem.x0.values[p] for p in pred_nodes])

    def aggregate(field: np.ndarray, t: float) -> np.ndarray:
        v = np.empty(layout.n_l)
        for i in range(layout.n_l):
            if i == 0:
                d = 0.0
            else:
                p = pred_nodes[i]
                d = (field[p] - field[p - 1]) / h
            v[i] = d + control.interp(i + 1, t)
        return v

    pred_idx = np.array(pred_nodes[1:], dtype=np.int64)
    v_old = aggregate(x, 0.0)
    for k in range(n_steps):
        # the ghost left neighbor of the node right of a_j is the
        # boundary value y_{j+1}, not the stored access-node trace
        ghost_corr = y[1:] - x[pred_idx] if first_nodes.size else None
        x[1:] -= lam * (x[1:] - x[:-1])
        if first_nodes.size:
            x[first_nodes] += lam * ghost_corr
        t_new = (k + 1) * tau
        v_new = aggregate(x, t_new)
        y -= (c * tau / 2.0) * (v_old + v_new)
        x[0] = y[0]
        v_old = v_new
    return StateField(grid, x)
