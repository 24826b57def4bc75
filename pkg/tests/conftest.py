import json

import numpy as np
import pytest
from hypothesis import settings, strategies as st

from ddqn_planner.gridworld import CANONICAL_META_PATH, CellKind, GridMap, canonical_map

# wall-clock deadlines are meaningless next to multi-minute training tests
settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def canonical():
    return canonical_map()


@pytest.fixture(scope="session")
def canonical_meta():
    return json.loads(CANONICAL_META_PATH.read_text())


def empty_map(width, height, start, end, obstacles=()):
    return GridMap.from_obstacles(width, height, start, end, obstacles)


def random_map(rng: np.random.Generator, width=20, height=20, density=0.25) -> GridMap:
    cells = np.where(rng.random((height, width)) < density, CellKind.OBSTACLE, CellKind.FREE).astype(np.int8)
    flat = rng.choice(width * height, size=2, replace=False)
    (sy, sx), (ey, ex) = (divmod(int(i), width) for i in flat)
    cells[sy, sx] = CellKind.START
    cells[ey, ex] = CellKind.END
    return GridMap(cells)


@st.composite
def grid_maps(draw, max_side=8):
    width = draw(st.integers(2, max_side))
    height = draw(st.integers(2, max_side))
    kinds = draw(
        st.lists(st.sampled_from([CellKind.FREE, CellKind.OBSTACLE]), min_size=width * height,
                 max_size=width * height)
    )
    cells = np.array(kinds, dtype=np.int8).reshape(height, width)
    s, e = draw(st.lists(st.integers(0, width * height - 1), min_size=2, max_size=2, unique=True))
    cells[divmod(s, width)] = CellKind.START
    cells[divmod(e, width)] = CellKind.END
    return GridMap(cells)


# acceptance criterion number -> one-line verdict, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        terminalreporter.write_line(ACCEPTANCE.get(n, f"criterion {n:2d}: NOT RUN or errored"))
