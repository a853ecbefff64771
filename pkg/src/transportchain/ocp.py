"""Linear-quadratic optimal control of the value-coupled chain.

Discretize-then-optimize: the chain dynamics are discretized with the
symmetric difference quotient in space (one-sided second order at
subdomain right edges) and the implicit midpoint rule in time, the
coupling x_i(a_{i-1}) = x_{i-1}(a_{i-1}) + u_i becoming a transmission
row between duplicated access-point unknowns.  The quadratic objective

    J = 1/2 integral ||x||^2 dt + alpha/2 integral ||u||^2 dt

is discretized with trapezoidal time quadrature for the state and the
midpoint rule for the control, and the resulting equality-constrained
QP is solved in one shot through its KKT system by a sparse direct
factorization.  An adjoint-based reduced gradient provides an
independent optimality oracle.

Unknown layout inside the KKT vector: states x_1..x_K first (level 0
is the fixed initial value), then controls u at the K step midpoints,
then one multiplier block per one-step constraint.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (
    ALIGN_RTOL,
    ChainLayout,
    ControlSignal,
    SpatialGrid,
    StateField,
    Trajectory,
)
from .errors import (
    BadParamError,
    GridMismatchError,
    ProblemTooLargeError,
    SingularSystemError,
)

__all__ = [
    "DEFAULT_MAX_UNKNOWNS",
    "DiscreteDynamics",
    "KktSystem",
    "OcpConfig",
    "OcpSolution",
    "assemble_kkt",
    "cost_of",
    "discretize_dynamics",
    "periodic_step_matrices",
    "reduced_gradient",
    "solve",
]

# sized so the direct factorization stays within a few GB of memory
DEFAULT_MAX_UNKNOWNS = 1_200_000


@dataclass(frozen=True)
class OcpConfig:
    """Problem data for one optimal-control solve.

    ``tau`` defaults to h/c (unit CFL); the implicit midpoint scheme is
    unconditionally stable, so any positive step is accepted.  ``h`` is
    redundant with the grid of ``x0`` and only checked for consistency
    when given.
    """

    layout: ChainLayout
    x0: StateField
    T: float
    alpha: float
    h: float | None = None
    tau: float | None = None
    max_unknowns: int = DEFAULT_MAX_UNKNOWNS

    def __post_init__(self):
        if self.alpha <= 0:
            raise BadParamError(f"control weight must be positive, got {self.alpha}")
        if self.T <= 0:
            raise BadParamError(f"horizon must be positive, got {self.T}")
        grid = self.x0.grid
        grid.require_alignment(self.layout)
        if self.h is not None and abs(self.h - grid.h) > ALIGN_RTOL * grid.h:
            raise GridMismatchError(
                f"h = {self.h} does not match the initial-value grid h = {grid.h}"
            )
        if self.h is None:
            object.__setattr__(self, "h", grid.h)
        if self.tau is None:
            object.__setattr__(self, "tau", grid.h / self.layout.c)
        if self.tau <= 0:
            raise BadParamError(f"time step must be positive, got {self.tau}")
        n_steps = int(round(self.T / self.tau))
        if n_steps < 1 or abs(n_steps * self.tau - self.T) > ALIGN_RTOL * self.T:
            raise BadParamError(
                f"tau = {self.tau} does not divide the horizon T = {self.T}"
            )

    @property
    def grid(self) -> SpatialGrid:
        return self.x0.grid

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.tau))

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    @property
    def midpoint_times(self) -> np.ndarray:
        t = self.times
        return 0.5 * (t[:-1] + t[1:])


@dataclass(frozen=True)
class DiscreteDynamics:
    """One-step map m_plus x_{k+1} = m_minus x_k + b u_{k+1/2}.

    The state vector duplicates every interior access point: subdomain
    i owns both of its endpoints, and the transmission row at its first
    unknown enforces x[first_i] - x[last_{i-1}] = u_i (pure inflow
    u_1 at the left boundary).  ``weights`` holds the per-subdomain
    trapezoidal quadrature weights of the duplicated layout.
    """

    layout: ChainLayout
    grid: SpatialGrid
    tau: float
    m_plus: sp.csr_matrix
    m_minus: sp.csr_matrix
    b: sp.csr_matrix
    weights: np.ndarray
    dof_nodes: np.ndarray
    offsets: tuple[int, ...]
    first_dofs: np.ndarray
    last_dofs: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.dof_nodes.size

    @cached_property
    def _lu(self):
        try:
            return spla.splu(self.m_plus.tocsc())
        except RuntimeError as exc:  # pragma: no cover - singular G
            raise SingularSystemError(f"one-step matrix factorization: {exc}")

    def step(self, x: np.ndarray, u_mid: np.ndarray) -> np.ndarray:
        """Advance one time step with the midpoint control values."""
        return self._lu.solve(self.m_minus @ x + self.b @ u_mid)

    def step_adjoint(self, lam_next: np.ndarray, driving: np.ndarray) -> np.ndarray:
        """Solve m_plus^T lam = m_minus^T lam_next - driving."""
        return self._lu.solve(self.m_minus.T @ lam_next - driving, trans="T")

    def from_grid(self, values: np.ndarray) -> np.ndarray:
        """Spread plain-grid node values onto the duplicated unknowns."""
        out = np.empty(self.n_dofs)
        grid = self.grid
        for i, (lo, hi) in enumerate(self.layout.subdomains):
            sl = slice(grid.index_of(lo), grid.index_of(hi) + 1)
            off = self.offsets[i]
            out[off:off + sl.stop - sl.start] = values[sl]
        return out

    def to_grid(self, dofs: np.ndarray) -> np.ndarray:
        """Collapse duplicated unknowns to plain-grid nodes.

        Shared access nodes keep the left limit (the owning subdomain's
        last unknown), matching the half-open subdomain convention.
        """
        grid = self.grid
        out = np.empty(grid.n + 1)
        for i, (lo, hi) in enumerate(self.layout.subdomains):
            lo_i, hi_i = grid.index_of(lo), grid.index_of(hi)
            off = self.offsets[i]
            skip = 1 if i > 0 else 0
            out[lo_i + skip:hi_i + 1] = dofs[off + skip:off + hi_i - lo_i + 1]
        return out


def discretize_dynamics(config: OcpConfig) -> DiscreteDynamics:
    """Assemble the implicit-midpoint one-step map for the chain."""
    layout, grid, tau, c = config.layout, config.grid, config.tau, config.layout.c
    h = grid.h
    offsets: list[int] = []
    sub_sizes: list[int] = []
    off = 0
    for lo, hi in layout.subdomains:
        n_i = grid.index_of(hi) - grid.index_of(lo)
        offsets.append(off)
        sub_sizes.append(n_i + 1)
        off += n_i + 1
    n = off
    first_dofs = np.asarray(offsets, dtype=np.int64)
    last_dofs = first_dofs + np.asarray(sub_sizes, dtype=np.int64) - 1

    dof_nodes = np.empty(n)
    weights = np.empty(n)
    rows_l, cols_l, vals_l = [], [], []
    for i, (lo, hi) in enumerate(layout.subdomains):
        o, m = offsets[i], sub_sizes[i]
        dof_nodes[o:o + m] = np.linspace(lo, hi, m)
        weights[o:o + m] = h
        weights[o] = weights[o + m - 1] = h / 2
        # central quotient on interior unknowns
        mid = np.arange(o + 1, o + m - 1)
        rows_l.append(np.repeat(mid, 2))
        cols_l.append(np.stack([mid - 1, mid + 1], axis=1).ravel())
        vals_l.append(np.tile([-0.5 / h, 0.5 / h], mid.size))
        # one-sided second order at the right edge
        e = o + m - 1
        rows_l.append(np.array([e, e, e]))
        cols_l.append(np.array([e, e - 1, e - 2]))
        vals_l.append(np.array([1.5 / h, -2.0 / h, 0.5 / h]))
    g = sp.csr_matrix(
        (np.concatenate(vals_l),
         (np.concatenate(rows_l), np.concatenate(cols_l))),
        shape=(n, n),
    )

    dyn = np.ones(n)
    dyn[first_dofs] = 0.0
    scale = sp.diags(dyn)
    eye = sp.eye(n, format="csr")
    m_plus = (scale @ (eye + (tau * c / 2) * g)).tolil()
    m_minus = (scale @ (eye - (tau * c / 2) * g)).tocsr()
    b = sp.lil_matrix((n, layout.n_l))
    for i, f in enumerate(first_dofs):
        m_plus[f, f] = 1.0
        if i > 0:
            m_plus[f, last_dofs[i - 1]] = -1.0
        b[f, i] = 1.0
    return DiscreteDynamics(
        layout=layout, grid=grid, tau=tau,
        m_plus=m_plus.tocsr(), m_minus=m_minus, b=b.tocsr(),
        weights=weights, dof_nodes=dof_nodes, offsets=tuple(offsets),
        first_dofs=first_dofs, last_dofs=last_dofs,
    )


def periodic_step_matrices(n: int, h: float, tau: float, c: float):
    """Implicit-midpoint matrices on a periodic closure (test harness).

    The periodic central quotient is exactly skew-symmetric, so the
    returned pair defines a discrete L2 isometry.
    """
    if n < 3:
        raise BadParamError("periodic closure needs at least three nodes")
    idx = np.arange(n)
    g = sp.csr_matrix(
        (np.tile([-0.5 / h, 0.5 / h], n),
         (np.repeat(idx, 2), np.stack([(idx - 1) % n, (idx + 1) % n], 1).ravel())),
        shape=(n, n),
    )
    eye = sp.eye(n, format="csr")
    return eye + (tau * c / 2) * g, eye - (tau * c / 2) * g


def _theta(n_steps: int) -> np.ndarray:
    th = np.ones(n_steps + 1)
    th[0] = th[-1] = 0.5
    return th


@dataclass(frozen=True)
class KktSystem:
    """Assembled first-order optimality system.

    Unknown order: states x_1..x_K, then midpoint controls u_0..u_{K-1},
    then one multiplier block per step constraint.
    """

    matrix: sp.csc_matrix
    rhs: np.ndarray
    dynamics: DiscreteDynamics
    n_steps: int

    @property
    def n_state(self) -> int:
        return self.n_steps * self.dynamics.n_dofs

    @property
    def n_control(self) -> int:
        return self.n_steps * self.dynamics.layout.n_l

    @property
    def x_slice(self) -> slice:
        return slice(0, self.n_state)

    @property
    def u_slice(self) -> slice:
        return slice(self.n_state, self.n_state + self.n_control)

    @property
    def lam_slice(self) -> slice:
        return slice(self.n_state + self.n_control,
                     self.n_state + self.n_control + self.n_state)


def assemble_kkt(config: OcpConfig, dynamics: DiscreteDynamics | None = None) -> KktSystem:
    """Build the sparse symmetric indefinite optimality system."""
    dyn = dynamics if dynamics is not None else discretize_dynamics(config)
    n, k_steps, tau = dyn.n_dofs, config.n_steps, config.tau
    n_ctrl = dyn.layout.n_l
    unknowns = k_steps * (2 * n + n_ctrl)
    if unknowns > config.max_unknowns:
        raise ProblemTooLargeError(
            f"{unknowns} unknowns exceed the budget {config.max_unknowns}; "
            "coarsen h or tau, shorten T, or raise max_unknowns"
        )
    theta = _theta(k_steps)
    wd = sp.diags(dyn.weights)
    hx = sp.block_diag(
        [tau * theta[k] * wd for k in range(1, k_steps + 1)], format="csr"
    )
    hu = config.alpha * tau * sp.eye(k_steps * n_ctrl, format="csr")
    hmat = sp.block_diag([hx, hu], format="csr")

    sub = sp.diags(np.ones(k_steps - 1), -1, format="csr")
    a_x = sp.kron(sp.eye(k_steps, format="csr"), dyn.m_plus, format="csr") \
        + sp.kron(sub, -dyn.m_minus, format="csr")
    a_u = sp.kron(sp.eye(k_steps, format="csr"), -dyn.b, format="csr")
    a = sp.hstack([a_x, a_u], format="csr")

    rhs = np.zeros(hmat.shape[0] + k_steps * n)
    rhs[hmat.shape[0]:hmat.shape[0] + n] = dyn.m_minus @ dyn.from_grid(
        config.x0.values
    )
    matrix = sp.bmat([[hmat, a.T], [a, None]], format="csc")
    return KktSystem(matrix=matrix, rhs=rhs, dynamics=dyn, n_steps=k_steps)


@dataclass(frozen=True)
class OcpSolution:
    """Optimal state, adjoint, and control with solve diagnostics.

    The state trajectory lives on the plain grid at the node times
    0..T; the adjoint trajectory and the raw control live at the step
    midpoints, where the midpoint discretization defines them.
    ``control`` resamples the midpoint values onto the node times for
    interoperability with the simulation API.
    """

    state: Trajectory
    adjoint: Trajectory
    control: ControlSignal
    control_midpoint: np.ndarray
    midpoint_times: np.ndarray
    cost: float
    residual: float
    state_dofs: np.ndarray = field(repr=False, default=None)

    def summary(self) -> dict:
        return {
            "cost": self.cost,
            "kkt_residual": self.residual,
            "state_final_max": float(np.max(np.abs(self.state.fields[-1]))),
            "control_max": float(np.max(np.abs(self.control_midpoint))),
        }


def _midpoints_to_nodes(u_mid: np.ndarray) -> np.ndarray:
    """Average midpoint samples onto node times, constant at the ends."""
    k_steps, n_ctrl = u_mid.shape
    out = np.empty((n_ctrl, k_steps + 1))
    out[:, 0] = u_mid[0]
    out[:, -1] = u_mid[-1]
    if k_steps > 1:
        out[:, 1:-1] = 0.5 * (u_mid[:-1] + u_mid[1:]).T
    return out


def _objective(config: OcpConfig, dyn: DiscreteDynamics,
               xs: np.ndarray, u_mid: np.ndarray) -> float:
    """Discrete cost; xs rows are dof states at levels 0..K."""
    theta = _theta(config.n_steps)
    state_part = np.einsum("kn,n,kn->k", xs, dyn.weights, xs) @ theta
    return float(
        0.5 * config.tau * state_part
        + 0.5 * config.alpha * config.tau * np.sum(u_mid**2)
    )


def solve(config: OcpConfig, system: KktSystem | None = None) -> OcpSolution:
    """Solve the optimality system by a sparse direct method."""
    kkt = system if system is not None else assemble_kkt(config)
    dyn = kkt.dynamics
    try:
        z = spla.spsolve(kkt.matrix, kkt.rhs)
    except (RuntimeError, MemoryError) as exc:
        if isinstance(exc, MemoryError):
            raise ProblemTooLargeError(
                "direct factorization ran out of memory"
            ) from exc
        raise SingularSystemError(
            f"KKT factorization failed on the "
            f"{kkt.matrix.shape[0]}x{kkt.matrix.shape[1]} system: {exc}"
        ) from exc
    if not np.all(np.isfinite(z)):
        raise SingularSystemError(
            "KKT solve produced non-finite entries (singular system; "
            f"shape {kkt.matrix.shape[0]}, nnz {kkt.matrix.nnz})"
        )
    residual = float(
        np.linalg.norm(kkt.matrix @ z - kkt.rhs)
        / max(1.0, np.linalg.norm(kkt.rhs))
    )

    n, k_steps = dyn.n_dofs, kkt.n_steps
    xs = np.vstack([
        dyn.from_grid(config.x0.values),
        z[kkt.x_slice].reshape(k_steps, n),
    ])
    u_mid = z[kkt.u_slice].reshape(k_steps, dyn.layout.n_l)
    lam = z[kkt.lam_slice].reshape(k_steps, n) / config.tau

    times = config.times
    state = Trajectory(
        dyn.grid, times, np.vstack([dyn.to_grid(row) for row in xs])
    )
    adjoint = Trajectory(
        dyn.grid, config.midpoint_times,
        np.vstack([dyn.to_grid(row) for row in lam]),
    )
    control = ControlSignal(times, _midpoints_to_nodes(u_mid))
    return OcpSolution(
        state=state, adjoint=adjoint, control=control,
        control_midpoint=u_mid, midpoint_times=config.midpoint_times,
        cost=_objective(config, dyn, xs, u_mid), residual=residual,
        state_dofs=xs,
    )


def _as_midpoint_array(config: OcpConfig, u) -> tuple[np.ndarray, bool]:
    """Accept either a midpoint (K, N_L) array or a node ControlSignal."""
    if isinstance(u, ControlSignal):
        times = config.times
        if u.times.size != times.size or np.any(
            np.abs(u.times - times) > ALIGN_RTOL * max(1.0, config.T)
        ):
            raise GridMismatchError(
                "control signal must be sampled on the solver's node times"
            )
        return 0.5 * (u.values[:, :-1] + u.values[:, 1:]).T.copy(), True
    arr = np.asarray(u, dtype=float)
    if arr.shape != (config.n_steps, config.layout.n_l):
        raise GridMismatchError(
            f"midpoint control must have shape "
            f"({config.n_steps}, {config.layout.n_l}), got {arr.shape}"
        )
    return arr, False


def _forward(config: OcpConfig, dyn: DiscreteDynamics,
             u_mid: np.ndarray) -> np.ndarray:
    xs = np.empty((config.n_steps + 1, dyn.n_dofs))
    xs[0] = dyn.from_grid(config.x0.values)
    for k in range(config.n_steps):
        xs[k + 1] = dyn.step(xs[k], u_mid[k])
    return xs


def cost_of(config: OcpConfig, u,
            dynamics: DiscreteDynamics | None = None) -> float:
    """Discrete objective value of an arbitrary control (oracle)."""
    dyn = dynamics if dynamics is not None else discretize_dynamics(config)
    u_mid, _ = _as_midpoint_array(config, u)
    return _objective(config, dyn, _forward(config, dyn, u_mid), u_mid)


def reduced_gradient(config: OcpConfig, u,
                     dynamics: DiscreteDynamics | None = None):
    """Gradient of the discrete objective via one adjoint sweep.

    For a midpoint (K, N_L) array input the k-th gradient row is
    alpha tau u_k - b^T lambda_k with the multipliers recovered by the
    backward substitution of the stationarity rows; a ControlSignal
    input is averaged onto midpoints and the gradient is mapped back to
    node times by the transposed averaging, so directional derivatives
    against node-time perturbations remain exact.
    """
    dyn = dynamics if dynamics is not None else discretize_dynamics(config)
    u_mid, was_signal = _as_midpoint_array(config, u)
    k_steps, tau = config.n_steps, config.tau
    theta = _theta(k_steps)
    xs = _forward(config, dyn, u_mid)
    lam = np.empty((k_steps, dyn.n_dofs))
    nxt = np.zeros(dyn.n_dofs)
    for j in range(k_steps, 0, -1):
        lam[j - 1] = dyn.step_adjoint(nxt, tau * theta[j] * dyn.weights * xs[j])
        nxt = lam[j - 1]
    grad_mid = config.alpha * tau * u_mid - lam @ dyn.b
    if not was_signal:
        return grad_mid
    node_vals = np.zeros((dyn.layout.n_l, k_steps + 1))
    node_vals[:, :-1] += 0.5 * grad_mid.T
    node_vals[:, 1:] += 0.5 * grad_mid.T
    return ControlSignal(config.times, node_vals)
