import numpy as np
import pytest

from gazekit.gaze import ScreenSpec


@pytest.fixture
def screen() -> ScreenSpec:
    return ScreenSpec(1280, 720)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)
