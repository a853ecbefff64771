"""Ramp-feedback closed loops and decay-envelope verification.

The feedback ramps in over half the shortest access-point transit time
dt = delta/c: kappa(t) rises linearly from 0 to 1 on [0, dt/2].  With
value (Dirichlet) coupling the effective inflow at every access point
is (1 - kappa(t)) times the incoming trace, so after the ramp nothing
crosses an access point and the state is flushed out in finite time.
With derivative (Neumann) coupling each boundary value obeys the scalar
dynamics y' = -c kappa y - c (1 - kappa) g driven by the predecessor's
derivative trace g, which decays like exp(-c t) once the ramp ends.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import ALIGN_RTOL, ChainLayout, ControlSignal, StateField, Trajectory
from .errors import (
    BadInitialDataError,
    BadParamError,
    GridMisalignedError,
    GridMismatchError,
)
from .stabilizability import DecayConstants, dirichlet_constants, neumann_constants

__all__ = [
    "ClosedLoopRun",
    "EnvelopeReport",
    "dirichlet_closed_loop",
    "envelope_check",
    "kappa",
    "neumann_boundary_ode",
    "neumann_closed_loop",
    "ramp_integral",
]


def kappa(t, dt: float):
    """Feedback ramp: 2t/dt for t <= dt/2, then 1.

    Continuous, kappa(0) = 0, range [0, 1].  Accepts scalars or arrays.
    """
    if dt <= 0:
        raise BadParamError(f"ramp time must be positive, got {dt}")
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise BadParamError("kappa is defined for t >= 0")
    out = np.minimum(2.0 * arr / dt, 1.0)
    return float(out) if np.isscalar(t) else out


def ramp_integral(t, dt: float):
    """Closed form of integral_0^t kappa: t^2/dt below dt/2, else t - dt/4."""
    if dt <= 0:
        raise BadParamError(f"ramp time must be positive, got {dt}")
    arr = np.asarray(t, dtype=float)
    out = np.where(arr <= dt / 2.0, arr * arr / dt, arr - dt / 4.0)
    return float(out) if np.isscalar(t) else out


@dataclass(frozen=True)
class EnvelopeReport:
    """Outcome of comparing stored norms against m * exp(-k t) * norm(x0)."""

    max_ratio: float
    passed: bool
    vacuous: bool
    m: float
    k: float
    norm: str
    tolerance: float
    worst_time: float | None = None
    worst_subdomain: int | None = None
    per_subdomain: bool = False
    vacuous_subdomains: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "max_ratio": self.max_ratio,
            "passed": self.passed,
            "vacuous": self.vacuous,
            "m": self.m,
            "k": self.k,
            "norm": self.norm,
            "tolerance": self.tolerance,
            "worst_time": self.worst_time,
            "worst_subdomain": self.worst_subdomain,
            "per_subdomain": self.per_subdomain,
            "vacuous_subdomains": list(self.vacuous_subdomains),
        }


@dataclass(frozen=True)
class ClosedLoopRun:
    """Immutable record of one closed-loop simulation.

    ``norms`` holds the check norm at every march step over ``times``;
    the trajectory stores field snapshots at a (possibly strided)
    subset, with the realized control sampled on the same subset so the
    two time grids coincide.  ``control_full`` keeps the full-rate
    realized control, suitable for replay through the open-loop solver.
    For Neumann runs ``subdomain_norms`` holds the per-subdomain H1
    norms, one column per subdomain.
    """

    layout: ChainLayout
    x0: StateField
    bc: str
    times: np.ndarray
    norms: np.ndarray
    norm_kind: str
    trajectory: Trajectory
    control: ControlSignal
    control_full: ControlSignal
    envelope: DecayConstants
    subdomain_norms: np.ndarray | None = None

    @property
    def extinction_time(self) -> float | None:
        """First stored march time with norm <= 1e-10 * norm(x0)."""
        cut = 1e-10 * self.norms[0]
        below = np.nonzero(self.norms <= cut)[0]
        return float(self.times[below[0]]) if below.size else None


def _validate_times(times, c: float, h: float) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 2 or t[0] != 0.0:
        raise BadParamError("time grid must be 1-D, start at 0, length >= 2")
    tau = t[1] - t[0]
    if tau <= 0 or np.any(np.abs(np.diff(t) - tau) > ALIGN_RTOL * tau):
        raise BadParamError("time grid must be uniform and increasing")
    if abs(c * tau - h) > ALIGN_RTOL * h:
        raise GridMisalignedError(
            f"need unit CFL c*tau = h, got c*tau = {c * tau}, h = {h}"
        )
    return t


def _snap_steps(n_steps: int, store_every: int) -> np.ndarray:
    if store_every < 1:
        raise BadParamError(f"store_every must be >= 1, got {store_every}")
    if n_steps % store_every:
        raise BadParamError(
            f"store_every = {store_every} must divide the step count {n_steps}"
        )
    return np.arange(0, n_steps + 1, store_every, dtype=np.int64)


def _check_initial(x0: StateField) -> None:
    if not np.all(np.isfinite(np.gradient(x0.values, x0.grid.h))):
        raise BadInitialDataError("initial data has non-finite difference quotients")


def dirichlet_closed_loop(
    layout: ChainLayout,
    x0: StateField,
    times,
    store_every: int = 1,
    envelope: DecayConstants | None = None,
) -> ClosedLoopRun:
    """March the value-feedback closed loop on the grid, exactly.

    The inflow at access point a_{i-1} is (1 - kappa(t)) times the
    incoming trace (x0(ct) for the left boundary), realized by the
    controls u_1 = (1 - kappa) x0(ct) and u_i = -kappa * trace.  At unit
    CFL the march is an exact shift, so the extinction for
    t >= 2 L0 / c holds to machine zero on the grid.
    """
    grid = x0.grid
    grid.require_alignment(layout)
    _check_initial(x0)
    t = _validate_times(times, layout.c, grid.h)
    n_steps = t.size - 1
    dt = layout.delta / layout.c

    scale = 1.0 - kappa(t[:-1], dt)
    left_values = (1.0 - kappa(t[1:], dt)) * x0.interp(layout.c * t[1:])
    first_nodes = np.array(
        [grid.index_of(a) + 1 for a in layout.controlled_points[1:]],
        dtype=np.int64,
    )
    weights = np.full(grid.n + 1, grid.h)
    weights[0] = weights[-1] = grid.h / 2
    snap_steps = _snap_steps(n_steps, store_every)

    norms, traces, snaps = kernels.closed_loop_march(
        x0.values, first_nodes, scale, left_values, weights, snap_steps
    )

    u_full = np.empty((layout.n_l, t.size))
    u_full[0] = (1.0 - kappa(t, dt)) * x0.interp(layout.c * t)
    if layout.n_l > 1:
        u_full[1:] = -(kappa(t, dt) * traces.T)
    control_full = ControlSignal(t, u_full)
    control_stored = ControlSignal(
        t[snap_steps], u_full[:, snap_steps]
    )
    traj = Trajectory(grid, t[snap_steps], snaps, control_stored)
    env = envelope if envelope is not None else dirichlet_constants(
        layout.max_gap, 1.0, layout.c
    )
    return ClosedLoopRun(
        layout=layout, x0=x0, bc="dirichlet", times=t, norms=norms,
        norm_kind="l2", trajectory=traj, control=control_stored,
        control_full=control_full, envelope=env,
    )


def neumann_boundary_ode(
    trace_deriv: np.ndarray, x0_val: float, times, c: float, dt: float
) -> np.ndarray:
    """Integrate y' = -c kappa y - c (1 - kappa) g, y(0) = x0_val.

    The homogeneous factor uses the closed form of integral kappa, so
    with zero forcing the output is exactly exp(-c * ramp_integral(t))
    times y(0); the forcing integral uses trapezoidal quadrature.
    """
    t = np.asarray(times, dtype=float)
    g = np.asarray(trace_deriv, dtype=float)
    if g.shape != t.shape:
        raise GridMismatchError(
            f"forcing has shape {g.shape}, time grid {t.shape}"
        )
    if c <= 0:
        raise BadParamError(f"transport speed must be positive, got {c}")
    tau = t[1] - t[0] if t.size > 1 else 0.0
    phi = ramp_integral(t, dt)
    decay = np.exp(-c * np.diff(phi))
    forcing = -c * (1.0 - kappa(t, dt)) * g
    y = np.empty_like(t)
    y[0] = x0_val
    for k in range(t.size - 1):
        y[k + 1] = decay[k] * y[k] + 0.5 * tau * (
            decay[k] * forcing[k] + forcing[k + 1]
        )
    return y


def neumann_closed_loop(
    layout: ChainLayout,
    x0: StateField,
    times,
    store_every: int = 1,
    envelope: DecayConstants | None = None,
) -> ClosedLoopRun:
    """March the derivative-feedback closed loop.

    Controls u_1 = (1 - kappa) x0'(ct) + kappa y_1 and
    u_i = -kappa d_{i-1} + kappa y_i turn every boundary value into the
    scalar dynamics of neumann_boundary_ode forced by the predecessor's
    derivative trace; field values on the swept region replay the
    boundary value along characteristics and the per-subdomain H1 norms
    are evaluated with the analytic derivative of that representation.
    """
    grid = x0.grid
    grid.require_alignment(layout)
    _check_initial(x0)
    t = _validate_times(times, layout.c, grid.h)
    n_steps = t.size - 1
    n_l = layout.n_l
    c = layout.c
    dt = layout.delta / c
    kap = kappa(t, dt)

    node_ranges = [
        (grid.index_of(lo), grid.index_of(hi))
        for lo, hi in layout.subdomains
    ]
    for lo_i, hi_i in node_ranges:
        if hi_i - lo_i < 2:
            raise BadInitialDataError(
                "each subdomain needs at least three grid nodes for the "
                "discrete H2 requirement"
            )
    x0_sub = [x0.values[lo_i:hi_i + 1] for lo_i, hi_i in node_ranges]
    x0_der = [np.gradient(vals, grid.h, edge_order=2) for vals in x0_sub]
    if not all(np.all(np.isfinite(d)) for d in x0_der):
        raise BadInitialDataError("initial data is not discretely H2")
    gap_steps = [hi_i - lo_i for lo_i, hi_i in node_ranges]

    # boundary forcings g_i, boundary values y_i and their derivative
    # traces, built left to right
    sub_nodes0 = grid.nodes[node_ranges[0][0]:node_ranges[0][1] + 1]
    g_rows = np.zeros((n_l, t.size))
    g_rows[0] = np.interp(c * t, sub_nodes0, x0_der[0])
    y_rows = np.zeros((n_l, t.size))
    dtr_rows = np.zeros((n_l, t.size))  # derivative trace at each a_i
    for i in range(n_l):
        if i > 0:
            g_rows[i] = dtr_rows[i - 1]
        y_rows[i] = neumann_boundary_ode(
            g_rows[i], x0.values[node_ranges[i][0]], t, c, dt
        )
        # derivative of subdomain i+1's solution at its right end a_{i+1}
        if i < n_l - 1:
            m_i = gap_steps[i]
            ks = np.arange(t.size)
            row = np.empty(t.size)
            unswept = ks < m_i
            sub_nodes = grid.nodes[node_ranges[i][0]:node_ranges[i][1] + 1]
            row[unswept] = np.interp(
                layout.access_points[i + 1] - c * t[unswept],
                sub_nodes, x0_der[i],
            )
            src = ks[~unswept] - m_i
            swept_deriv = kap * y_rows[i] + (1.0 - kap) * g_rows[i]
            row[~unswept] = swept_deriv[src]
            dtr_rows[i] = row

    # derivative of the swept-region representation, per subdomain
    swept_deriv_rows = kap * y_rows + (1.0 - kap) * g_rows

    snap_steps = _snap_steps(n_steps, store_every)
    snaps = np.empty((snap_steps.size, grid.n + 1))
    sub_norms = np.empty((t.size, n_l))
    h = grid.h
    si = 0
    field = np.empty(grid.n + 1)
    for k in range(t.size):
        for i, (lo_i, hi_i) in enumerate(node_ranges):
            offs = np.arange(hi_i - lo_i + 1)
            swept = offs <= k
            retard = np.maximum(k - offs, 0)
            vals = np.where(swept, y_rows[i][retard], 0.0)
            back = np.clip(offs - k, 0, offs.size - 1)
            vals = np.where(swept, vals, x0_sub[i][back])
            deriv = np.where(
                swept, swept_deriv_rows[i][retard], x0_der[i][back]
            )
            # access node a_{i-1} is owned by the predecessor (subdomains
            # are half-open on the left); the boundary value y_i still
            # enters this subdomain's norm above
            skip = 1 if i > 0 else 0
            field[lo_i + skip:hi_i + 1] = vals[skip:]
            sub_norms[k, i] = np.sqrt(
                np.trapezoid(vals**2, dx=h) + np.trapezoid(deriv**2, dx=h)
            )
        if si < snap_steps.size and snap_steps[si] == k:
            snaps[si] = field
            si += 1
    norms = np.sqrt(np.sum(sub_norms**2, axis=1))

    u_full = np.empty((n_l, t.size))
    u_full[0] = (1.0 - kap) * g_rows[0] + kap * y_rows[0]
    for i in range(1, n_l):
        u_full[i] = -kap * g_rows[i] + kap * y_rows[i]
    control_full = ControlSignal(t, u_full)
    control_stored = ControlSignal(t[snap_steps], u_full[:, snap_steps])
    traj = Trajectory(grid, t[snap_steps], snaps, control_stored)
    env = envelope if envelope is not None else neumann_constants(
        layout.max_gap, layout.delta, c
    )
    return ClosedLoopRun(
        layout=layout, x0=x0, bc="neumann", times=t, norms=norms,
        norm_kind="h1", trajectory=traj, control=control_stored,
        control_full=control_full, envelope=env,
        subdomain_norms=sub_norms,
    )


def _trajectory_norms(traj: Trajectory, norm: str) -> np.ndarray:
    from . import norms as norms_mod

    fn = norms_mod.l2 if norm == "l2" else norms_mod.h1
    return np.array([fn(traj.field_at(k)) for k in range(traj.n_times)])


def envelope_check(
    run: ClosedLoopRun | Trajectory,
    m: float | None = None,
    k: float | None = None,
    norm: str | None = None,
    slack_coefficient: float = 10.0,
    per_subdomain: bool = False,
) -> EnvelopeReport:
    """Compare stored norms against the envelope m * exp(-k t) * norm(x0).

    Defaults for (m, k, norm) come from the run's envelope constants.
    A zero initial norm makes the check vacuous (reported as a pass).
    With ``per_subdomain`` each subdomain's H1 norm is checked against
    the initial H1 content of the region it provably depends on, the
    subdomain together with its predecessor (content crosses the access
    point during the feedback ramp, so a subdomain that starts empty
    can still acquire its predecessor's mass); subdomains whose
    dependence region starts empty are skipped as vacuous.  The pass
    tolerance is (1 + 1e-9) * (1 + slack_coefficient * h).
    """
    if isinstance(run, Trajectory):
        if run.times[0] != 0.0:
            raise BadParamError("envelope check needs the slice at t = 0")
        if m is None or k is None:
            raise BadParamError("supply m and k when checking a bare trajectory")
        norm = norm or "l2"
        times = run.times
        values = _trajectory_norms(run, norm)
        sub_values = None
        h = run.grid.h
    else:
        if m is None:
            m = run.envelope.m
        if k is None:
            k = run.envelope.k
        if norm is None or norm == run.norm_kind:
            norm = run.norm_kind
            values = run.norms
            times = run.times
        else:
            values = _trajectory_norms(run.trajectory, norm)
            times = run.trajectory.times
        sub_values = run.subdomain_norms
        h = run.x0.grid.h
    if norm not in ("l2", "h1"):
        raise BadParamError(f"norm must be 'l2' or 'h1', got {norm!r}")
    if m < 1.0 or k <= 0:
        raise BadParamError("envelope needs m >= 1 and k > 0")

    tolerance = (1.0 + 1e-9) * (1.0 + slack_coefficient * h)
    bound = m * np.exp(-k * times)

    if per_subdomain:
        if sub_values is None:
            raise BadParamError(
                "per-subdomain checking requires a run with subdomain norms"
            )
        own0 = sub_values[0]
        init = np.sqrt(own0**2 + np.concatenate(([0.0], own0[:-1] ** 2)))
        # report 1-based subdomain indices, matching worst_subdomain
        vacuous_cols = tuple(int(i) + 1 for i in np.nonzero(init == 0.0)[0])
        active = np.nonzero(init > 0.0)[0]
        if active.size == 0:
            return EnvelopeReport(
                max_ratio=0.0, passed=True, vacuous=True, m=m, k=k, norm=norm,
                tolerance=tolerance, per_subdomain=True,
                vacuous_subdomains=vacuous_cols,
            )
        ratios = sub_values[:, active] / (bound[:, None] * init[active])
        flat = int(np.argmax(ratios))
        row, col = divmod(flat, active.size)
        max_ratio = float(ratios[row, col])
        return EnvelopeReport(
            max_ratio=max_ratio, passed=bool(max_ratio <= tolerance),
            vacuous=False, m=m, k=k, norm=norm, tolerance=tolerance,
            worst_time=float(times[row]),
            worst_subdomain=int(active[col]) + 1,
            per_subdomain=True, vacuous_subdomains=vacuous_cols,
        )

    norm0 = values[0]
    if norm0 == 0.0:
        return EnvelopeReport(
            max_ratio=0.0, passed=True, vacuous=True, m=m, k=k, norm=norm,
            tolerance=tolerance,
        )
    ratios = values / (bound * norm0)
    worst = int(np.argmax(ratios))
    max_ratio = float(ratios[worst])
    return EnvelopeReport(
        max_ratio=max_ratio, passed=bool(max_ratio <= tolerance),
        vacuous=False, m=m, k=k, norm=norm, tolerance=tolerance,
        worst_time=float(times[worst]),
    )
