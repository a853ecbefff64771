"""Numpy reference implementations of the time-marching kernels.

These define the semantics; the compiled module in _speedups.pyx must
produce bitwise-identical fields.  Both kernels advance a single-valued
grid field under left-to-right transport at unit CFL (exact shift) or
general lambda = c*tau/h <= 1 (first-order upwind).
"""
import numpy as np


def closed_loop_march(x0, first_nodes, scale, left_values, weights, snap_steps):
    """Exact-shift march of the ramp-feedback closed loop.

    Per step k -> k+1 every value moves one node right; the node just
    right of each interior access point receives the old access-node
    trace scaled by ``scale[k]`` (the factor 1 - kappa(t_k)); node 0 is
    set to ``left_values[k]``, the precomputed left-boundary inflow at
    t_{k+1}.

    Parameters
    ----------
    x0 : (n+1,) float array
        Initial grid values.
    first_nodes : (J,) int array
        Node indices immediately right of the interior access points.
    scale : (K,) float array
        Inflow factor applied at step k.
    left_values : (K,) float array
        Inflow value at node 0 for time level k+1.
    weights : (n+1,) float array
        Quadrature weights for the per-step norm.
    snap_steps : (S,) int array, sorted
        Time levels at which to store a field snapshot.

    Returns
    -------
    norms : (K+1,) array of weighted L2 norms per time level
    traces : (K+1, J) array of access-node values per time level
    snaps : (S, n+1) array of stored fields
    """
    x = np.array(x0, dtype=float)
    n_steps = scale.shape[0]
    trace_nodes = np.asarray(first_nodes, dtype=np.int64) - 1
    norms = np.empty(n_steps + 1)
    traces = np.empty((n_steps + 1, trace_nodes.size))
    snaps = np.empty((len(snap_steps), x.size))
    si = 0
    norms[0] = np.sqrt(weights @ (x * x))
    traces[0] = x[trace_nodes]
    if si < len(snap_steps) and snap_steps[si] == 0:
        snaps[si] = x
        si += 1
    for k in range(n_steps):
        x[1:] = x[:-1]
        x[first_nodes] *= scale[k]
        x[0] = left_values[k]
        norms[k + 1] = np.sqrt(weights @ (x * x))
        traces[k + 1] = x[trace_nodes]
        if si < len(snap_steps) and snap_steps[si] == k + 1:
            snaps[si] = x
            si += 1
    return norms, traces, snaps


def upwind_march(x0, first_nodes, lam, ghost_add, left_values, weights,
                 snap_steps):
    """First-order upwind march with ghost injection at access points.

    Interior update x[m] <- x[m] - lam*(x[m] - x[m-1]).  At the node
    just right of access point a_j the left neighbor is the ghost value
    x[node(a_j)] + ghost_add[k, j] (upstream trace plus control); node 0
    is set to ``left_values[k]`` afterwards.

    Returns (x_final, norms, snaps) with the same conventions as
    closed_loop_march.
    """
    x = np.array(x0, dtype=float)
    n_steps = ghost_add.shape[0]
    norms = np.empty(n_steps + 1)
    snaps = np.empty((len(snap_steps), x.size))
    si = 0
    norms[0] = np.sqrt(weights @ (x * x))
    if si < len(snap_steps) and snap_steps[si] == 0:
        snaps[si] = x
        si += 1
    for k in range(n_steps):
        x[1:] -= lam * (x[1:] - x[:-1])
        if first_nodes.size:
            x[first_nodes] += lam * ghost_add[k]
        x[0] = left_values[k]
        norms[k + 1] = np.sqrt(weights @ (x * x))
        if si < len(snap_steps) and snap_steps[si] == k + 1:
            snaps[si] = x
            si += 1
    return x, norms, snaps
