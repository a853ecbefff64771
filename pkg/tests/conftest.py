"""Shared fixtures: canonical layouts, grids, and initial data."""

import numpy as np
import pytest

from transportchain import core


def unit_times(layout: core.ChainLayout, h: float, T: float) -> np.ndarray:
    """Uniform time grid with the unit-CFL step tau = h / c."""
    tau = h / layout.c
    n = round(T / tau)
    return np.linspace(0.0, n * tau, n + 1)


@pytest.fixture
def grid4() -> core.SpatialGrid:
    return core.SpatialGrid.uniform(4.0, 0.01)


@pytest.fixture
def chain4() -> core.ChainLayout:
    return core.equidistant_layout(1.0, 4.0, c=2.0)


@pytest.fixture
def bump4(grid4: core.SpatialGrid) -> core.StateField:
    return core.bump_initial(0.6, 0.8, grid4)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240814)
