"""Norm definitions against independent quadrature oracles and properties."""

import numpy as np
import pytest

from transportchain import core, norms
from transportchain.errors import (
    BadIntervalError,
    BadParamError,
    EmptyTrajectoryError,
)

# adaptive-quadrature oracles (scipy.integrate.quad on the closed-form
# integrands, abs err < 3e-9), frozen:
#   integral of bump(0.6, 0.8)^2                      -> l2   = BUMP_L2
#   ... plus integral of bump'(w)^2                   -> h1   = BUMP_H1
#   integral of exp(2 * 0.5 * |w - 0.6|) * bump^2     -> wl2  = BUMP_WL2
BUMP_L2 = 0.627178064958499
BUMP_H1 = 2.821259780383742
BUMP_WL2 = 0.664522514889745


def _bump(h: float) -> core.StateField:
    grid = core.SpatialGrid.uniform(4.0, h)
    return core.bump_initial(0.6, 0.8, grid)


class TestQuadratureOracles:
    def test_l2_matches_quadrature(self):
        fld = _bump(1e-4)
        assert norms.l2(fld) == pytest.approx(BUMP_L2, rel=1e-6)

    def test_l2_converges_with_h(self):
        errs = [abs(norms.l2(_bump(h)) - BUMP_L2) for h in (0.02, 0.01, 0.005)]
        assert errs[0] > errs[1] > errs[2]

    def test_h1_matches_quadrature(self):
        fld = _bump(1e-4)
        assert norms.h1(fld) == pytest.approx(BUMP_H1, rel=1e-4)

    def test_weighted_matches_quadrature(self):
        fld = _bump(1e-4)
        w = norms.WeightSpec(mu=0.5, center=0.6)
        assert norms.weighted_l2(fld, w) == pytest.approx(BUMP_WL2, rel=1e-6)


class TestExactCases:
    def test_linear_field_h1(self):
        grid = core.SpatialGrid.uniform(1.0, 1e-3)
        fld = core.StateField(grid, grid.nodes)
        # f(w) = w: integral f^2 = 1/3, integral f'^2 = 1
        assert norms.h1(fld) == pytest.approx(np.sqrt(4.0 / 3.0), rel=1e-6)
        assert norms.l2(fld) == pytest.approx(np.sqrt(1.0 / 3.0), rel=1e-6)

    def test_constant_field_l2(self):
        grid = core.SpatialGrid.uniform(2.0, 0.1)
        fld = core.StateField(grid, np.full(grid.n + 1, 3.0))
        assert norms.l2(fld) == pytest.approx(3.0 * np.sqrt(2.0), rel=1e-14)

    def test_zero_weight_is_plain_l2(self, bump4):
        w0 = norms.WeightSpec(mu=0.0, center=1.7)
        assert norms.weighted_l2(bump4, w0) == norms.l2(bump4)


class TestNormProperties:
    def test_homogeneity_and_triangle(self, grid4, rng):
        for _ in range(10):
            f = core.StateField(grid4, rng.normal(size=grid4.n + 1))
            g = core.StateField(grid4, rng.normal(size=grid4.n + 1))
            s = float(rng.normal())
            fs = core.StateField(grid4, s * f.values)
            fg = core.StateField(grid4, f.values + g.values)
            assert norms.l2(fs) == pytest.approx(abs(s) * norms.l2(f), rel=1e-12)
            assert norms.l2(fg) <= norms.l2(f) + norms.l2(g) + 1e-12
            assert norms.h1(fg) <= norms.h1(f) + norms.h1(g) + 1e-12

    def test_h1_dominates_l2(self, grid4, rng):
        for _ in range(10):
            f = core.StateField(grid4, rng.normal(size=grid4.n + 1))
            assert norms.h1(f) >= norms.l2(f)

    def test_interval_splits_at_interior_node(self, bump4):
        # trapezoid rule is additive across any shared node
        total = norms.l2(bump4) ** 2
        left = norms.l2(bump4, (0.0, 2.0)) ** 2
        right = norms.l2(bump4, (2.0, 4.0)) ** 2
        assert left + right == pytest.approx(total, rel=1e-14)

    def test_interval_of_support_captures_everything(self, bump4):
        assert norms.l2(bump4, (0.2, 1.0)) == pytest.approx(norms.l2(bump4),
                                                            rel=1e-14)


class TestSpacetime:
    def test_constant_trajectory(self, grid4, bump4):
        times = np.array([0.0, 0.5, 1.0])
        fields = np.tile(bump4.values, (3, 1))
        traj = core.Trajectory(grid4, times, fields, None)
        w = norms.WeightSpec(mu=0.5, center=0.6)
        expect = norms.weighted_l2(bump4, w)  # time integral of a constant
        assert norms.weighted_l2_spacetime(traj, w) == pytest.approx(expect,
                                                                     rel=1e-12)

    def test_needs_two_slices(self, grid4, bump4):
        traj = core.Trajectory(grid4, np.array([0.0]),
                               bump4.values.reshape(1, -1), None)
        with pytest.raises(EmptyTrajectoryError):
            norms.weighted_l2_spacetime(traj, norms.WeightSpec(0.5, 0.0))


class TestValidation:
    def test_weight_rejects_negative_mu(self):
        with pytest.raises(BadParamError):
            norms.WeightSpec(mu=-0.5, center=0.0)

    def test_interval_must_be_ordered_and_inside(self, bump4):
        with pytest.raises(BadIntervalError):
            norms.l2(bump4, (1.0, 0.5))
        with pytest.raises(BadIntervalError):
            norms.l2(bump4, (0.0, 9.0))

    def test_h1_needs_three_nodes(self, bump4):
        with pytest.raises(BadIntervalError):
            norms.h1(bump4, (0.0, 0.01))
