"""Shared fixtures: small slot grids so most tests run in milliseconds."""

import numpy as np
import pytest

from hefit.emulator import EmulatorContext


@pytest.fixture
def ctx():
    """16x16 grid (256 slots): roomy enough for every kernel, still instant."""
    return EmulatorContext(256, 16, max_level=12)


@pytest.fixture
def boot_ctx():
    return EmulatorContext(256, 16, max_level=12, auto_bootstrap=True)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
