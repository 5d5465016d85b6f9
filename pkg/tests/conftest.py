import os

import numpy as np
import pytest

from grinopt.pipeline import TOPHAT_A, TOPHAT_M, sech_state, tophat_design
from grinopt.potentials import poschl_teller
from grinopt.spectral import Grid1D

SLOW = os.environ.get("GRINOPT_SLOW", "") not in ("", "0")


def pytest_collection_modifyitems(config, items):
    if SLOW:
        return
    skip = pytest.mark.skip(reason="full-budget run; set GRINOPT_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def tophat_grid():
    return Grid1D(-5 * np.pi, 5 * np.pi, 1024)


@pytest.fixture(scope="session")
def tophat_parts(tophat_grid):
    """(v0, vl, phi0, phi_d) of the top-hat problem."""
    grid = tophat_grid
    vl, pair = tophat_design(grid, TOPHAT_A, TOPHAT_M)
    return poschl_teller(1.0, 0.0, grid), vl, sech_state(grid), pair.phi


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
