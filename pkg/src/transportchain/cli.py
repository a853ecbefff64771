"""Command-line front end: simulations, optimal control, sweeps, checks.

Subcommands
-----------
simulate   closed-loop or autonomous run, trajectory + envelope reports
ocp        one optimal-control solve, state/adjoint/control CSV + summary
sweep      weighted space-time norms of OCP solutions across domain sizes
check      stabilizability report for a layout, optional certificate
validate   oracle suites (solver equivalence, gradients, envelopes)

A config file (INI syntax with [layout], [solver] and [experiment]
sections) may provide any value; command-line flags override it.  The
output directory resolves from --outdir, then the TRANSPORTCHAIN_OUTDIR
environment variable, then the config, then the working directory.
Exit codes: 0 success, 1 validation failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, feedback, mild, norms, ocp
from .core import (
    ChainLayout,
    ControlSignal,
    SpatialGrid,
    StateField,
    build_chain,
    bump_initial,
    equidistant_layout,
    midpoint_layout,
)
from .errors import ChainError, GridMisalignedError, NonMonotoneError
from .stabilizability import (
    gap_criterion,
    interval_criterion,
    worst_case_certificate,
)

OUTDIR_ENV = "TRANSPORTCHAIN_OUTDIR"

_DEFAULTS = {
    "layout": "equidistant:1.0",
    "L": 10.0,
    "c": 2.0,
    "h": 0.02,
    "tau": None,
    "alpha": 0.156,
    "T": 5.0,
    "x0": "bump:0.6,0.8",
    "mu": 0.5,
    "L_list": (2.0, 4.0, 6.0, 8.0, 10.0),
    "seed": 1234,
    "outdir": ".",
    "jobs": None,
}


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


class UsageError(Exception):
    """Bad arguments or malformed referenced files (exit code 2)."""


@dataclass
class ExperimentSpec:
    """Resolved experiment description shared by all subcommands."""

    scenario: str = _DEFAULTS["layout"]
    L: float = _DEFAULTS["L"]
    c: float = _DEFAULTS["c"]
    h: float = _DEFAULTS["h"]
    tau: float | None = _DEFAULTS["tau"]
    alpha: float = _DEFAULTS["alpha"]
    T: float = _DEFAULTS["T"]
    x0: str = _DEFAULTS["x0"]
    mu: float = _DEFAULTS["mu"]
    L_list: tuple[float, ...] = _DEFAULTS["L_list"]
    seed: int = _DEFAULTS["seed"]
    outdir: str = _DEFAULTS["outdir"]
    jobs: int | None = _DEFAULTS["jobs"]
    bc: str = "dirichlet"
    mode: str = "closed"
    out_format: str = "csv"
    store_every: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.L_list or any(
            b <= a for a, b in zip(self.L_list, self.L_list[1:])
        ):
            raise UsageError("L list must be nonempty and strictly increasing")
        for key, path in (("layout", self.scenario), ("x0", self.x0)):
            if isinstance(path, str) and path.startswith("file:"):
                if not Path(path[5:]).exists():
                    raise UsageError(f"{key} file not found: {path[5:]}")


def _parse_layout_file(path: str, L: float, c: float) -> ChainLayout:
    points = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                value = float(text)
            except ValueError:
                raise UsageError(
                    f"layout file {path}: not a number on line {lineno}: {text!r}"
                )
            if points and value <= points[-1]:
                raise NonMonotoneError(
                    f"layout file {path}: access points must be strictly "
                    f"increasing (line {lineno}: {value} after {points[-1]})"
                )
            points.append(value)
    return build_chain(points, L, c)


def make_layout(scenario: str, L: float, c: float) -> ChainLayout:
    """Build a layout from its CLI syntax.

    Accepted forms: ``equidistant:<gap>``, ``midpoint``, ``file:<path>``.
    """
    if scenario == "midpoint":
        return midpoint_layout(L, c)
    if scenario.startswith("equidistant:"):
        try:
            gap = float(scenario.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad gap in layout spec {scenario!r}")
        return equidistant_layout(gap, L, c)
    if scenario.startswith("file:"):
        return _parse_layout_file(scenario[5:], L, c)
    raise UsageError(
        f"unknown layout spec {scenario!r} "
        "(use equidistant:<gap>, midpoint, or file:<path>)"
    )


def make_initial(x0_spec: str, grid: SpatialGrid) -> StateField:
    """Build initial data from its CLI syntax: bump:e1,e2 or file:<path>."""
    if x0_spec.startswith("bump:"):
        try:
            e1, e2 = (float(p) for p in x0_spec[5:].split(","))
        except ValueError:
            raise UsageError(f"bad bump parameters in {x0_spec!r}")
        return bump_initial(e1, e2, grid)
    if x0_spec.startswith("file:"):
        path = x0_spec[5:]
        try:
            data = np.loadtxt(path, delimiter=",", skiprows=1)
        except OSError:
            raise UsageError(f"x0 file not found: {path}")
        if data.ndim != 2 or data.shape[1] != 2:
            raise UsageError(f"x0 file {path} must have two columns (omega,value)")
        if data.shape[0] != grid.n + 1 or np.max(
            np.abs(data[:, 0] - grid.nodes)
        ) > 1e-9 * max(1.0, grid.L):
            raise GridMisalignedError(
                f"x0 file {path} nodes do not match the grid (h={grid.h}, L={grid.L})"
            )
        return StateField(grid, data[:, 1])
    raise UsageError(f"unknown x0 spec {x0_spec!r} (use bump:e1,e2 or file:<path>)")


def _auto_stride(n_steps: int, requested: int, cap: int = 200) -> int:
    """Pick a snapshot stride dividing n_steps; 0 requests automatic."""
    if requested:
        if n_steps % requested:
            raise UsageError(
                f"--store-every {requested} must divide the step count {n_steps}"
            )
        return requested
    stride = max(1, n_steps // cap)
    while n_steps % stride:
        stride -= 1
    return stride


def _resolve_outdir(spec: ExperimentSpec) -> Path:
    outdir = os.environ.get(OUTDIR_ENV) or spec.outdir
    path = Path(outdir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _control_csv(path: Path, times: np.ndarray, values: np.ndarray) -> None:
    """values shaped (channels, len(times)); rows t,channel,value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "channel", "value"])
        for j, t in enumerate(times):
            for i in range(values.shape[0]):
                writer.writerow([_fmt(t), i + 1, _fmt(values[i, j])])


# --------------------------------------------------------------------------
# simulate


def run_simulate(spec: ExperimentSpec) -> dict:
    layout = make_layout(spec.scenario, spec.L, spec.c)
    grid = SpatialGrid.uniform(spec.L, spec.h)
    x0 = make_initial(spec.x0, grid)
    tau = grid.h / layout.c
    n_steps = int(round(spec.T / tau))
    if n_steps < 1:
        raise UsageError(f"horizon T={spec.T} shorter than one step {tau}")
    times = np.linspace(0.0, n_steps * tau, n_steps + 1)
    stride = _auto_stride(n_steps, spec.store_every)
    outdir = _resolve_outdir(spec)

    summary: dict = {
        "mode": spec.mode,
        "bc": spec.bc,
        "L": spec.L,
        "c": layout.c,
        "h": grid.h,
        "tau": tau,
        "T": float(times[-1]),
        "access_points": list(layout.access_points),
        "store_every": stride,
    }

    if spec.mode == "autonomous":
        from .core import Trajectory

        sample = times[::stride]
        fields = np.stack([
            mild.autonomous_solution(x0, t, bc=spec.bc, layout=layout).values
            for t in sample
        ])
        traj = Trajectory(grid, sample, fields)
        slice_norms = np.array([norms.l2(traj.field_at(k))
                                for k in range(traj.n_times)])
        cut = 1e-10 * slice_norms[0]
        below = np.nonzero(slice_norms <= cut)[0]
        summary["exit"] = {
            "theoretical_time": spec.L / layout.c,
            "first_stored_time_below": (
                float(sample[below[0]]) if below.size else None
            ),
            "threshold": float(cut),
        }
    elif spec.mode == "closed":
        runner = (feedback.dirichlet_closed_loop if spec.bc == "dirichlet"
                  else feedback.neumann_closed_loop)
        run = runner(layout, x0, times, store_every=stride)
        traj = run.trajectory
        report = feedback.envelope_check(run)
        summary["envelope"] = report.to_dict()
        summary["envelope"]["constants"] = {
            "m": run.envelope.m, "k": run.envelope.k,
            "variant": run.envelope.variant, "l0": run.envelope.l0,
        }
        if spec.bc == "dirichlet":
            summary["extinction"] = {
                "theoretical_time": 2.0 * layout.max_gap / layout.c,
                "first_grid_time_below": run.extinction_time,
                "threshold": float(1e-10 * run.norms[0]),
                "within_theory": bool(
                    run.extinction_time is not None
                    and run.extinction_time
                    <= 2.0 * layout.max_gap / layout.c + tau * (1 + 1e-9)
                ),
            }
    else:
        raise UsageError(f"unknown mode {spec.mode!r} (use closed or autonomous)")

    if spec.out_format == "json":
        (outdir / "trajectory.json").write_text(traj.to_json())
    else:
        traj.to_csv(outdir / "trajectory.csv")
    _write_json(outdir / "simulate_summary.json", summary)
    return summary


# --------------------------------------------------------------------------
# ocp


def run_ocp(spec: ExperimentSpec) -> dict:
    layout = make_layout(spec.scenario, spec.L, spec.c)
    grid = SpatialGrid.uniform(spec.L, spec.h)
    x0 = make_initial(spec.x0, grid)
    config = ocp.OcpConfig(layout, x0, T=spec.T, alpha=spec.alpha, tau=spec.tau)
    solution = ocp.solve(config)
    outdir = _resolve_outdir(spec)
    solution.state.to_csv(outdir / "state.csv")
    solution.adjoint.to_csv(outdir / "adjoint.csv")
    _control_csv(outdir / "control.csv", solution.midpoint_times,
                 solution.control_midpoint.T)
    weight = norms.WeightSpec(spec.mu, _bump_center(spec))
    summary = {
        "cost": solution.cost,
        "kkt_residual": solution.residual,
        "alpha": spec.alpha,
        "T": spec.T,
        "h": grid.h,
        "tau": config.tau,
        "L": spec.L,
        "scenario": spec.scenario,
        "norms": {
            "state_final_l2": float(norms.l2(solution.state.field_at(-1))),
            "state_weighted_spacetime": float(
                norms.weighted_l2_spacetime(solution.state, weight)
            ),
            "adjoint_weighted_spacetime": float(
                norms.weighted_l2_spacetime(solution.adjoint, weight)
            ),
            "control_max": float(np.max(np.abs(solution.control_midpoint))),
        },
    }
    _write_json(outdir / "ocp_summary.json", summary)
    return summary


def _bump_center(spec: ExperimentSpec) -> float:
    if spec.x0.startswith("bump:"):
        return float(spec.x0[5:].split(",")[0])
    return 0.6


# --------------------------------------------------------------------------
# sweep


def _sweep_point(task: dict) -> dict:
    """One (L, scenario) OCP solve; top-level so worker pools can pickle."""
    layout = make_layout(task["scenario"], task["L"], task["c"])
    grid = SpatialGrid.uniform(task["L"], task["h"])
    x0 = make_initial(task["x0"], grid)
    config = ocp.OcpConfig(layout, x0, T=task["T"], alpha=task["alpha"],
                           tau=task["tau"])
    solution = ocp.solve(config)
    weight = norms.WeightSpec(task["mu"], task["center"])
    return {
        "L": task["L"],
        "scenario": task["label"],
        "state_norm": float(norms.weighted_l2_spacetime(solution.state, weight)),
        "costate_norm": float(
            norms.weighted_l2_spacetime(solution.adjoint, weight)
        ),
        "cost": solution.cost,
        "residual": solution.residual,
    }


def _classify(values: list[float]) -> dict:
    increasing = all(b > a for a, b in zip(values, values[1:]))
    plateau = len(values) >= 3 and values[-1] <= 1.1 * values[-3]
    if plateau:
        kind = "plateau"
    elif increasing:
        kind = "increasing"
    else:
        kind = "neither"
    return {
        "classification": kind,
        "strictly_increasing": increasing,
        "ratio_last_to_third_last": (
            values[-1] / values[-3] if len(values) >= 3 else None
        ),
        "ratio_last_to_first": values[-1] / values[0],
    }


def run_sweep(spec: ExperimentSpec) -> dict:
    if len(spec.L_list) < 3:
        raise UsageError("sweep needs at least three domain lengths")
    center = _bump_center(spec)
    scenarios = [("equidistant", "equidistant:1.0"), ("midpoint", "midpoint")]
    tasks = [
        {
            "L": L, "scenario": syntax, "label": label, "c": spec.c,
            "h": spec.h, "tau": spec.tau, "alpha": spec.alpha, "T": spec.T,
            "x0": spec.x0, "mu": spec.mu, "center": center,
        }
        for L in spec.L_list
        for label, syntax in scenarios
    ]
    jobs = spec.jobs or min(len(tasks), os.cpu_count() or 1)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    rows.sort(key=lambda r: (r["L"], r["scenario"]))

    outdir = _resolve_outdir(spec)
    with open(outdir / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["L", "scenario", "state_norm", "costate_norm"])
        for row in rows:
            writer.writerow([
                _fmt(row["L"]), row["scenario"],
                _fmt(row["state_norm"]), _fmt(row["costate_norm"]),
            ])

    summary = {
        "mu": spec.mu, "alpha": spec.alpha, "T": spec.T, "h": spec.h,
        "L_values": list(spec.L_list),
        "scenarios": {},
    }
    for label, _ in scenarios:
        series = [r for r in rows if r["scenario"] == label]
        values = [r["state_norm"] for r in series]
        entry = _classify(values)
        entry["state_norms"] = values
        entry["costate_norms"] = [r["costate_norm"] for r in series]
        entry["costate"] = _classify(entry["costate_norms"])
        summary["scenarios"][label] = entry
    _write_json(outdir / "sweep_summary.json", summary)
    return summary


# --------------------------------------------------------------------------
# check


def run_check(spec: ExperimentSpec) -> dict:
    layout = make_layout(spec.scenario, spec.L, spec.c)
    bound = spec.extra.get("bound")
    report = gap_criterion(layout, bound=bound)
    payload = report.to_dict()
    payload["access_points"] = list(layout.access_points)
    payload["L"] = layout.L
    payload["c"] = layout.c
    outdir = _resolve_outdir(spec)
    _write_json(outdir / "gap_report.json", payload)
    if spec.extra.get("certificate"):
        missing = [k for k in ("l0", "eps", "m", "k") if k not in spec.extra]
        if missing:
            raise UsageError(
                "--certificate needs --" + ", --".join(missing)
            )
        cert = worst_case_certificate(
            l0=spec.extra["l0"], eps=spec.extra["eps"], layout=layout,
            m=spec.extra["m"], k=spec.extra["k"],
        )
        _write_json(outdir / "certificate.json", cert.to_dict())
        payload["certificate"] = cert.to_dict()
    return payload


# --------------------------------------------------------------------------
# validate


def _suite_oracle_equivalence(spec: ExperimentSpec) -> dict:
    layout = equidistant_layout(1.0, 4.0, spec.c)
    grid = SpatialGrid.uniform(4.0, spec.h)
    x0 = bump_initial(0.6, 0.8, grid)
    tau = grid.h / layout.c
    n_steps = int(round(2.0 / tau))
    times = np.linspace(0.0, n_steps * tau, n_steps + 1)
    run = feedback.dirichlet_closed_loop(layout, x0, times)
    zero = ControlSignal.zeros(layout.n_l, float(times[-1]), tau)
    legs = [
        ("zero control, exact step", zero, 1.0),
        ("feedback control, exact step", run.control_full, 1.0),
        ("zero control, cfl 0.5", zero, 0.5),
    ]
    worst = 0.0
    details = {}
    for name, control, cfl in legs:
        problem = mild.OpenLoopProblem(layout, x0, "dirichlet", control)
        t_final = float(times[-1])
        exact = mild.dirichlet_solution(problem, t_final)
        stepped = mild.upwind_solution(problem, t_final, cfl=cfl)
        ref = norms.l2(exact)
        err = norms.l2(StateField(grid, stepped.values - exact.values))
        rel = err / ref if ref > 0 else err
        details[name] = rel
        worst = max(worst, rel)
    return {
        "name": "oracle_equivalence",
        "passed": bool(worst <= 5e-2),
        "measured": worst,
        "tolerance": 5e-2,
        "details": details,
    }


def _suite_gradient(spec: ExperimentSpec) -> dict:
    layout = equidistant_layout(1.0, 4.0, spec.c)
    grid = SpatialGrid.uniform(4.0, 0.1)
    x0 = bump_initial(0.6, 0.8, grid)
    config = ocp.OcpConfig(layout, x0, T=2.0, alpha=spec.alpha)
    dyn = ocp.discretize_dynamics(config)
    rng = np.random.default_rng(spec.seed)
    u0 = 0.1 * rng.standard_normal((config.n_steps, layout.n_l))
    base_grad = ocp.reduced_gradient(config, u0, dynamics=dyn)
    eps = 1e-6
    worst = 0.0
    for _ in range(5):
        direction = rng.standard_normal(u0.shape)
        fd = (
            ocp.cost_of(config, u0 + eps * direction, dynamics=dyn)
            - ocp.cost_of(config, u0 - eps * direction, dynamics=dyn)
        ) / (2 * eps)
        analytic = float(np.sum(base_grad * direction))
        worst = max(worst, abs(fd - analytic) / max(1e-14, abs(analytic)))
    return {
        "name": "gradient_check",
        "passed": bool(worst <= 1e-5),
        "measured": worst,
        "tolerance": 1e-5,
    }


def _suite_envelopes(spec: ExperimentSpec) -> dict:
    layout = equidistant_layout(1.0, 4.0, spec.c)
    grid = SpatialGrid.uniform(4.0, 0.01)
    x0 = bump_initial(0.6, 0.8, grid)
    tau = grid.h / layout.c
    n_steps = int(round(3.0 / tau))
    times = np.linspace(0.0, n_steps * tau, n_steps + 1)
    d_run = feedback.dirichlet_closed_loop(layout, x0, times)
    d_rep = feedback.envelope_check(d_run)
    n_run = feedback.neumann_closed_loop(layout, x0, times)
    n_rep = feedback.envelope_check(n_run, per_subdomain=True)
    worst = max(d_rep.max_ratio, n_rep.max_ratio)
    return {
        "name": "envelopes",
        "passed": bool(d_rep.passed and n_rep.passed),
        "measured": worst,
        "tolerance": min(d_rep.tolerance, n_rep.tolerance),
        "details": {
            "dirichlet_l2": d_rep.max_ratio,
            "neumann_per_subdomain_h1": n_rep.max_ratio,
        },
    }


def _random_layout(rng: np.random.Generator) -> ChainLayout:
    gaps = rng.uniform(0.1, 10.0, size=rng.integers(3, 12))
    points = np.concatenate(([0.0], np.cumsum(gaps)))
    L = float(points[-1])
    return build_chain(points, L, 2.0)


def _scan_disjoint(layout: ChainLayout, l0: float) -> bool:
    """Exhaustively confirm a length-l0 interval free of access points."""
    surveyed = max(layout.L, layout.access_points[-1])
    pts = layout.access_points
    for lo, hi in zip(pts, pts[1:]):
        hi = min(hi, surveyed)
        if hi - lo > l0 * (1 + 1e-12):
            start = lo + (hi - lo - l0) / 2
            disjoint, _ = interval_criterion(layout, (start, start + l0))
            if disjoint:
                return True
    return False


def _suite_criterion_equivalence(spec: ExperimentSpec) -> dict:
    rng = np.random.default_rng(spec.seed)
    mismatches = 0
    trials = 0
    for _ in range(100):
        layout = _random_layout(rng)
        for l0 in (0.5, 1.0, 2.0, 5.0, 10.0):
            trials += 1
            by_gap = gap_criterion(layout, bound=l0).stabilizable
            by_scan = not _scan_disjoint(layout, l0)
            if by_gap != by_scan:
                mismatches += 1
    return {
        "name": "criterion_equivalence",
        "passed": mismatches == 0,
        "measured": float(mismatches),
        "tolerance": 0.0,
        "details": {"trials": trials},
    }


def _suite_weighted_norms(spec: ExperimentSpec) -> dict:
    from .core import Trajectory

    rng = np.random.default_rng(spec.seed)
    grid = SpatialGrid.uniform(2.0, 0.05)
    times = np.linspace(0.0, 1.0, 11)
    fields = rng.standard_normal((times.size, grid.n + 1))
    traj = Trajectory(grid, times, fields)
    flat = norms.weighted_l2_spacetime(traj, norms.WeightSpec(0.0, 0.6))
    per_slice = np.array(
        [norms.l2(traj.field_at(k)) ** 2 for k in range(traj.n_times)]
    )
    plain = float(np.sqrt(np.trapezoid(per_slice, x=times)))
    err = abs(flat - plain)
    h1_dominates = all(
        norms.h1(f) >= norms.l2(f)
        for f in (StateField(grid, rng.standard_normal(grid.n + 1))
                  for _ in range(3))
    )
    return {
        "name": "weighted_norm_identity",
        "passed": bool(err == 0.0 and h1_dominates),
        "measured": err,
        "tolerance": 0.0,
    }


def _suite_backend(spec: ExperimentSpec) -> dict:
    from . import kernels
    from .kernels import _reference

    rng = np.random.default_rng(spec.seed)
    n = 257
    x0 = rng.standard_normal(n)
    first_nodes = np.array([64, 128, 192], dtype=np.int64)
    n_steps = 100
    scale = rng.uniform(0.0, 1.0, n_steps)
    left = rng.standard_normal(n_steps)
    weights = np.full(n, 0.01)
    snaps = np.array([0, 50, 100], dtype=np.int64)
    ref = _reference.closed_loop_march(x0, first_nodes, scale, left, weights, snaps)
    active = kernels.closed_loop_march(x0, first_nodes, scale, left, weights, snaps)
    field_equal = all(
        np.array_equal(a, b) for a, b in ((ref[1], active[1]), (ref[2], active[2]))
    )
    norm_dev = float(np.max(np.abs(ref[0] - active[0]) / np.maximum(ref[0], 1e-300)))
    return {
        "name": "backend_consistency",
        "passed": bool(field_equal and norm_dev <= 1e-12),
        "measured": norm_dev,
        "tolerance": 1e-12,
        "details": {"backend": kernels.get_backend()},
    }


def run_validate(spec: ExperimentSpec) -> dict:
    suites = [
        _suite_oracle_equivalence(spec),
        _suite_gradient(spec),
        _suite_envelopes(spec),
        _suite_criterion_equivalence(spec),
        _suite_weighted_norms(spec),
        _suite_backend(spec),
    ]
    report = {
        "passed": all(s["passed"] for s in suites),
        "h": spec.h,
        "seed": spec.seed,
        "suites": suites,
    }
    outdir = _resolve_outdir(spec)
    _write_json(outdir / "validate_report.json", report)
    return report


# --------------------------------------------------------------------------
# argument plumbing


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    if not Path(path).exists():
        raise UsageError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    values: dict = {}
    if parser.has_section("layout"):
        sec = parser["layout"]
        if "kind" in sec:
            values["scenario"] = sec["kind"]
        for key in ("L", "c"):
            if key in sec:
                values[key] = float(sec[key])
    if parser.has_section("solver"):
        sec = parser["solver"]
        for key in ("h", "tau", "alpha", "T"):
            if key in sec:
                values[key] = float(sec[key])
    if parser.has_section("experiment"):
        sec = parser["experiment"]
        if "x0" in sec:
            values["x0"] = sec["x0"]
        if "mu" in sec:
            values["mu"] = float(sec["mu"])
        if "L_list" in sec:
            values["L_list"] = tuple(
                float(p) for p in sec["L_list"].replace(" ", "").split(",") if p
            )
        if "seed" in sec:
            values["seed"] = int(sec["seed"])
        if "outdir" in sec:
            values["outdir"] = sec["outdir"]
        if "jobs" in sec:
            values["jobs"] = int(sec["jobs"])
    return values


def _spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    values = dict(_load_config(getattr(args, "config", None)))
    mapping = {
        "layout": "scenario", "L": "L", "c": "c", "h": "h", "tau": "tau",
        "alpha": "alpha", "T": "T", "x0": "x0", "mu": "mu",
        "L_list": "L_list", "seed": "seed", "outdir": "outdir",
        "jobs": "jobs", "bc": "bc", "mode": "mode", "out": "out_format",
        "store_every": "store_every",
    }
    for flag, dest in mapping.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[dest] = value
    extra = {}
    for key in ("bound", "certificate", "l0", "eps", "m", "k"):
        if getattr(args, key, None) is not None:
            extra[key] = getattr(args, key)
    values["extra"] = extra
    known = set(ExperimentSpec.__dataclass_fields__)
    return ExperimentSpec(**{k: v for k, v in values.items() if k in known})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transportchain",
        description="Simulation, stabilization, and optimal control of "
                    "coupled transport chains.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, with_solver: bool = True):
        p.add_argument("--config", help="INI config file; flags override it")
        p.add_argument("--layout",
                       help="equidistant:<gap> | midpoint | file:<path>")
        p.add_argument("--L", type=float, help="domain length")
        p.add_argument("--c", type=float, help="transport speed")
        p.add_argument("--outdir", help=f"output directory (or ${OUTDIR_ENV})")
        if with_solver:
            p.add_argument("--h", type=float, help="spatial step")
            p.add_argument("--x0", help="bump:<e1>,<e2> | file:<path>")
            p.add_argument("--T", type=float, help="time horizon")

    p_sim = sub.add_parser("simulate", help="closed-loop or autonomous run")
    common(p_sim)
    p_sim.add_argument("--bc", choices=["dirichlet", "neumann"],
                       default=None, help="coupling kind (default dirichlet)")
    p_sim.add_argument("--mode", choices=["closed", "autonomous"], default=None,
                       help="closed loop (default) or uncontrolled")
    p_sim.add_argument("--out", choices=["csv", "json"], default=None,
                       help="trajectory format (default csv)")
    p_sim.add_argument("--store-every", dest="store_every", type=int,
                       default=None, help="snapshot stride (0 = automatic)")
    p_sim.set_defaults(func=lambda a: _finish(run_simulate, a))

    p_ocp = sub.add_parser("ocp", help="solve one optimal-control problem")
    common(p_ocp)
    p_ocp.add_argument("--alpha", type=float, help="control weight")
    p_ocp.add_argument("--tau", type=float, help="time step (default h/c)")
    p_ocp.add_argument("--mu", type=float, help="weight rate for norm report")
    p_ocp.set_defaults(func=lambda a: _finish(run_ocp, a))

    p_sweep = sub.add_parser("sweep", help="weighted norms across domain sizes")
    common(p_sweep)
    p_sweep.add_argument("--alpha", type=float, help="control weight")
    p_sweep.add_argument("--tau", type=float, help="time step (default h/c)")
    p_sweep.add_argument("--mu", type=float, help="spatial weight rate")
    p_sweep.add_argument("--L-list", dest="L_list",
                         type=lambda s: tuple(float(p) for p in s.split(",")),
                         help="comma-separated domain lengths")
    p_sweep.add_argument("--jobs", type=int, help="worker processes")
    p_sweep.set_defaults(func=lambda a: _finish(run_sweep, a))

    p_check = sub.add_parser("check", help="stabilizability report")
    common(p_check, with_solver=False)
    p_check.add_argument("--bound", type=float,
                         help="gap bound L0 to test against")
    p_check.add_argument("--certificate", action="store_true",
                         help="emit a worst-case counterexample certificate")
    p_check.add_argument("--l0", type=float, help="certificate gap bound")
    p_check.add_argument("--eps", type=float, help="certificate bump width")
    p_check.add_argument("--m", type=float, help="certificate overshoot")
    p_check.add_argument("--k", type=float, help="certificate decay rate")
    p_check.set_defaults(func=lambda a: _finish(run_check, a))

    p_val = sub.add_parser("validate", help="run the oracle suites")
    common(p_val)
    p_val.add_argument("--alpha", type=float, help="control weight")
    p_val.add_argument("--seed", type=int, help="randomized-suite seed")
    p_val.set_defaults(func=_run_validate_cmd)
    return parser


def _finish(runner, args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    result = runner(spec)
    line = {k: v for k, v in result.items()
            if isinstance(v, (int, float, str, bool))}
    print(json.dumps(line, sort_keys=True))
    return 0


def _run_validate_cmd(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    if getattr(args, "h", None) is None and "h" not in _load_config(
        getattr(args, "config", None)
    ):
        spec.h = 0.005
    report = run_validate(spec)
    for suite in report["suites"]:
        status = "pass" if suite["passed"] else "FAIL"
        print(f"{status}  {suite['name']}: measured {suite['measured']:.3e} "
              f"(tolerance {suite['tolerance']:.3e})")
    print("validate:", "pass" if report["passed"] else "FAIL")
    return 0 if report["passed"] else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except ChainError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
