from __future__ import annotations

import numpy as np
import pytest

from cleanuplab.env.config import preset
from cleanuplab.env.grid import builtin_map, parse_map


@pytest.fixture(scope="session")
def agent_cfg():
    return preset("agent-paper")


@pytest.fixture(scope="session")
def human_cfg():
    return preset("human-paper")


@pytest.fixture(scope="session")
def grid():
    return builtin_map()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_test_map(rows: list[str]) -> str:
    width = len(rows[0])
    return f"v1 {width} {len(rows)}\n" + "\n".join(rows) + "\n"


@pytest.fixture
def small_grid():
    # 9x7 arena: 2-wide river, 2-wide orchard, spawns in the middle column.
    rows = [
        "RR.....OO",
        "RR.....OO",
        "RR..P..OO",
        "RR..P..OO",
        "RR..P..OO",
        "RR..P..OO",
        "RR..P..OO",
    ]
    return parse_map(make_test_map(rows))
