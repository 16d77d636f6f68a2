import functools

import numpy as np
import pytest

from sclab.core import chrono_split
from sclab.world import build_world, simulate
from sclab.ariosim import Scenario


@functools.lru_cache(maxsize=None)
def generated(kind: str = "std", seed: int = 0):
    """Full-size world and split dataset, cached across the session."""
    world = build_world(seed)
    ds, state = simulate(world, Scenario.preset(kind, seed=seed))
    return world, chrono_split(ds), state


@pytest.fixture(scope="session")
def std0():
    return generated("std", 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
