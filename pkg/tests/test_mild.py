"""Exact open-loop solutions: trace-back formulas, semigroup, upwind oracle."""

import numpy as np
import pytest

from transportchain import core, mild, norms
from transportchain.errors import (
    BcMismatchError,
    GridMisalignedError,
    GridMismatchError,
    NegativeTimeError,
)
from conftest import unit_times


def _sin_control(layout, h, T, amp=0.3):
    tau = h / layout.c
    K = round(T / tau)
    times = np.linspace(0.0, K * tau, K + 1)
    vals = np.vstack(
        [amp * np.sin(2.1 * times + 0.5 * i) for i in range(layout.n_l)]
    )
    return core.ControlSignal(times, vals)


def _problem(bc, h=0.01, T=2.0, zero=False):
    layout = core.equidistant_layout(1.0, 4.0, c=2.0)
    grid = core.SpatialGrid.uniform(4.0, h)
    x0 = core.bump_initial(0.6, 0.8, grid)
    if zero:
        u = core.ControlSignal.zeros(layout.n_l, T, h / layout.c)
    else:
        u = _sin_control(layout, h, T)
    return mild.OpenLoopProblem(layout, x0, bc, u)


class TestAutonomous:
    def test_global_shift(self, grid4, bump4):
        out = mild.autonomous_solution(bump4, 0.25, c=2.0)
        w = grid4.nodes
        expect = np.where(w >= 0.5, bump4.interp(w - 0.5), 0.0)
        assert np.allclose(out.values, expect, atol=1e-14)

    def test_blockwise_dirichlet_zero_inflow(self, chain4):
        # the free flow shifts within each subdomain and feeds zeros in;
        # transmission between subdomains lives in the trace terms only
        grid = core.SpatialGrid.uniform(4.0, 0.1)
        x0 = core.StateField(grid, np.cos(grid.nodes) + 1.0)
        out = mild.autonomous_solution(x0, 0.5, "dirichlet", layout=chain4)
        w = grid.nodes
        shift = chain4.c * 0.5
        for lo, hi in chain4.subdomains:
            own = (w > lo + 1e-12) & (w <= hi + 1e-12)
            swept = own & (w <= lo + shift + 1e-12)
            body = own & ~swept
            assert np.all(out.values[swept] == 0.0)
            assert np.allclose(out.values[body], x0.interp(w[body] - shift),
                               atol=1e-14)

    def test_blockwise_neumann_constant_inflow(self, chain4):
        grid = core.SpatialGrid.uniform(4.0, 0.1)
        x0 = core.StateField(grid, np.cos(grid.nodes) + 1.0)
        out = mild.autonomous_solution(x0, 0.5, "neumann", layout=chain4)
        w = grid.nodes
        shift = chain4.c * 0.5
        for lo, hi in chain4.subdomains:
            own = (w > lo + 1e-12) & (w <= hi + 1e-12)
            swept = own & (w <= lo + shift + 1e-12)
            assert np.allclose(out.values[swept], x0.interp(lo), atol=1e-14)

    def test_semigroup_composition_global(self):
        # S(s + t) = S(t) S(s) for the full-domain flow of both kinds
        grid = core.SpatialGrid.uniform(4.0, 0.01)
        x0 = core.StateField(grid, np.cos(grid.nodes) + 1.0)
        for bc in ("dirichlet", "neumann"):
            for s, t in ((0.1, 0.2), (0.25, 0.5), (0.005, 0.9)):
                once = mild.autonomous_solution(x0, s + t, bc, c=2.0)
                mid = mild.autonomous_solution(x0, s, bc, c=2.0)
                twice = mild.autonomous_solution(mid, t, bc, c=2.0)
                assert np.allclose(once.values, twice.values, atol=1e-12), (
                    bc, s, t)

    def test_semigroup_composition_blockwise_dirichlet(self, chain4):
        grid = core.SpatialGrid.uniform(4.0, 0.01)
        x0 = core.bump_initial(0.6, 0.8, grid)
        for s, t in ((0.1, 0.2), (0.25, 0.5), (0.005, 0.9)):
            once = mild.autonomous_solution(x0, s + t, "dirichlet",
                                            layout=chain4)
            mid = mild.autonomous_solution(x0, s, "dirichlet", layout=chain4)
            twice = mild.autonomous_solution(mid, t, "dirichlet",
                                             layout=chain4)
            assert np.allclose(once.values, twice.values, atol=1e-12), (s, t)

    def test_semigroup_composition_blockwise_neumann_translate_part(
            self, chain4):
        # single-valued snapshots keep only the left limit at access
        # nodes, so the constant bands fed from a successor's own
        # boundary value cannot survive a second hop; the translate-owned
        # region composes exactly
        grid = core.SpatialGrid.uniform(4.0, 0.01)
        x0 = core.bump_initial(0.6, 0.8, grid)
        s, t = 0.1, 0.2
        once = mild.autonomous_solution(x0, s + t, "neumann", layout=chain4)
        mid = mild.autonomous_solution(x0, s, "neumann", layout=chain4)
        twice = mild.autonomous_solution(mid, t, "neumann", layout=chain4)
        w = grid.nodes
        shift = chain4.c * (s + t)
        own = np.zeros(w.size, dtype=bool)
        for lo, hi in chain4.subdomains:
            own |= (w > lo + shift + 1e-12) & (w <= hi + 1e-12)
        assert np.allclose(once.values[own], twice.values[own], atol=1e-12)

    def test_time_zero_is_identity(self, chain4, bump4):
        out = mild.autonomous_solution(bump4, 0.0, "dirichlet", layout=chain4)
        assert np.array_equal(out.values, bump4.values)

    def test_requires_layout_or_speed(self, bump4):
        with pytest.raises(Exception):
            mild.autonomous_solution(bump4, 0.5, "dirichlet")
        with pytest.raises(NegativeTimeError):
            mild.autonomous_solution(bump4, -0.5, "dirichlet", c=2.0)


class TestControlledSupport:
    def test_disjoint_then_merged(self, chain4):
        early = mild.controlled_support(chain4, 0.1)
        assert early == [(0.0, 0.2), (1.0, 1.2), (2.0, 2.2), (3.0, 3.2)]
        late = mild.controlled_support(chain4, 0.5)
        assert late == [(0.0, 4.0)]
        assert mild.controlled_support(chain4, 0.0) == []

    def test_partial_merge(self):
        layout = core.build_chain((0.0, 0.5, 4.0), L=4.0, c=2.0)
        got = mild.controlled_support(layout, 0.5)
        assert got == [(0.0, 1.5)]

    def test_clipped_to_domain(self, chain4):
        got = mild.controlled_support(chain4, 100.0)
        assert got == [(0.0, 4.0)]


class TestDirichletSolution:
    def test_matches_upwind_oracle_exactly(self):
        # at unit CFL the upwind march is an exact shift, so the two
        # independent constructions must agree to rounding
        prob = _problem("dirichlet")
        for t in (0.5, 1.0, 2.0):
            ms = mild.dirichlet_solution(prob, t)
            up = mild.upwind_solution(prob, t, cfl=1.0)
            assert np.max(np.abs(ms.values - up.values)) < 1e-12

    def test_upwind_low_cfl_converges(self):
        # at cfl < 1 the upwind scheme is O(h) diffusive; halving h must
        # shrink the defect against the exact solution
        errs = []
        for h in (0.02, 0.01):
            prob = _problem("dirichlet", h=h, T=1.0)
            ms = mild.dirichlet_solution(prob, 1.0)
            up = mild.upwind_solution(prob, 1.0, cfl=0.5)
            diff = core.StateField(prob.grid, ms.values - up.values)
            errs.append(norms.l2(diff) / norms.l2(ms))
        assert errs[0] < 0.25
        assert errs[1] < 0.7 * errs[0]

    def test_zero_control_transmits_traces(self):
        # with u = 0 the coupling passes each trace through unchanged, so
        # the solution is the plain full-domain translate even though the
        # bump crosses two access points
        prob = _problem("dirichlet", zero=True)
        ms = mild.dirichlet_solution(prob, 0.7)
        glob = mild.autonomous_solution(prob.x0, 0.7, "dirichlet",
                                        c=prob.layout.c)
        assert np.allclose(ms.values, glob.values, atol=1e-14)

    def test_control_enters_first_channel(self, chain4):
        # constant control on channel 1 fills the first swept region
        h = 0.01
        tau = h / chain4.c
        grid = core.SpatialGrid.uniform(4.0, h)
        x0 = core.StateField(grid, np.zeros(grid.n + 1))
        times = np.linspace(0.0, 1.0, round(1.0 / tau) + 1)
        vals = np.zeros((4, times.size))
        vals[0] = 1.0
        u = core.ControlSignal(times, vals)
        prob = mild.OpenLoopProblem(chain4, x0, "dirichlet", u)
        out = mild.dirichlet_solution(prob, 0.25)
        w = grid.nodes
        swept = (w > 0.0) & (w <= 0.5)
        assert np.allclose(out.values[swept], 1.0, atol=1e-14)
        assert np.all(out.values[w > 0.5 + 1e-12] == 0.0)


class TestNeumannSolution:
    def test_matches_upwind_oracle_to_first_order(self):
        rels = []
        for h in (0.02, 0.01):
            prob = _problem("neumann", h=h, T=1.0)
            ms = mild.neumann_solution(prob, 1.0)
            up = mild.upwind_solution(prob, 1.0, cfl=1.0)
            diff = core.StateField(prob.grid, ms.values - up.values)
            rels.append(norms.l2(diff) / norms.l2(ms))
        assert rels[0] < 0.2
        assert rels[1] < 0.7 * rels[0]

    def test_aggregate_and_transformed_inputs(self):
        prob = _problem("neumann", h=0.01, T=1.0)
        v = mild.aggregate_inputs(prob)
        assert v.shape == (prob.layout.n_l, prob.control.times.size)
        # channel 1 has no predecessor: aggregate input is the control
        assert np.allclose(v[0], prob.control.channel(1), atol=1e-14)
        frak = mild.transformed_inputs(prob)
        # the equivalent Dirichlet datum integrates the aggregate input:
        # row i = x0(a_{i-1}) - c * cumtrapz(v_i)
        tau = prob.control.tau
        for i, a in enumerate(prob.layout.controlled_points):
            csum = np.concatenate(
                ([0.0], np.cumsum(0.5 * tau * (v[i, 1:] + v[i, :-1]))))
            expect = prob.x0.interp(a) - prob.layout.c * csum
            assert np.allclose(frak[i], expect, atol=1e-12)

    def test_aggregate_requires_neumann(self):
        prob = _problem("dirichlet", h=0.02, T=0.5)
        with pytest.raises(BcMismatchError):
            mild.aggregate_inputs(prob)


class TestDispatchAndTrajectory:
    def test_solution_dispatch(self):
        for bc in ("dirichlet", "neumann"):
            prob = _problem(bc, h=0.02, T=0.5)
            direct = (mild.dirichlet_solution if bc == "dirichlet"
                      else mild.neumann_solution)(prob, 0.5)
            assert np.array_equal(mild.solution(prob, 0.5).values,
                                  direct.values)

    def test_dispatch_rejects_wrong_kind(self):
        prob = _problem("dirichlet", h=0.02, T=0.5)
        with pytest.raises(BcMismatchError):
            mild.neumann_solution(prob, 0.5)
        nprob = _problem("neumann", h=0.02, T=0.5)
        with pytest.raises(BcMismatchError):
            mild.dirichlet_solution(nprob, 0.5)

    def test_trajectory_sampling(self):
        prob = _problem("dirichlet", h=0.02, T=0.5)
        traj = mild.trajectory(prob, every=5)
        assert traj.times[0] == 0.0
        assert traj.times[-1] == pytest.approx(0.5)
        assert np.allclose(np.diff(traj.times), 5 * prob.control.tau)
        k = traj.n_times // 2
        direct = mild.solution(prob, float(traj.times[k]))
        assert np.allclose(traj.fields[k], direct.values, atol=1e-14)

    def test_trajectory_attaches_control_at_full_rate(self):
        prob = _problem("dirichlet", h=0.02, T=0.5)
        traj = mild.trajectory(prob, every=1)
        assert traj.control is prob.control

    def test_negative_time_rejected(self):
        prob = _problem("dirichlet", h=0.02, T=0.5)
        with pytest.raises(NegativeTimeError):
            mild.solution(prob, -1.0)


class TestProblemValidation:
    def test_bad_bc_string(self, chain4, bump4):
        u = core.ControlSignal.zeros(4, 1.0, 0.005)
        with pytest.raises(BcMismatchError):
            mild.OpenLoopProblem(chain4, bump4, "robin", u)

    def test_channel_count_mismatch(self, chain4, bump4):
        u = core.ControlSignal.zeros(3, 1.0, 0.005)
        with pytest.raises(GridMismatchError):
            mild.OpenLoopProblem(chain4, bump4, "dirichlet", u)

    def test_requires_unit_cfl(self, chain4, bump4):
        u = core.ControlSignal.zeros(4, 1.0, 0.004)
        with pytest.raises(GridMisalignedError):
            mild.OpenLoopProblem(chain4, bump4, "dirichlet", u)

    def test_requires_aligned_grid(self, chain4):
        grid = core.SpatialGrid.uniform(4.0, 4.0 / 7.0)
        x0 = core.StateField(grid, np.zeros(grid.n + 1))
        u = core.ControlSignal.zeros(4, 4.0, (4.0 / 7.0) / 2.0)
        with pytest.raises(GridMisalignedError):
            mild.OpenLoopProblem(chain4, x0, "dirichlet", u)
