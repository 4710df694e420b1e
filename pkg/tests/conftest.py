import os
import sys

import numpy as np
import pytest
from hypothesis import settings, strategies as st

sys.path.insert(0, os.path.dirname(__file__))

from evlink.events import EventStream, SensorGeometry  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@st.composite
def streams(draw, max_events=200, max_w=32, max_h=32, t_max=200_000):
    w = draw(st.integers(1, max_w))
    h = draw(st.integers(1, max_h))
    n = draw(st.integers(0, max_events))
    ts = sorted(draw(st.lists(st.integers(0, t_max), min_size=n, max_size=n)))
    xs = draw(st.lists(st.integers(0, w - 1), min_size=n, max_size=n))
    ys = draw(st.lists(st.integers(0, h - 1), min_size=n, max_size=n))
    ps = draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    return EventStream(SensorGeometry(w, h), ts, xs, ys, ps)


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    from evlink.dataset import generate_toy_dataset

    root = tmp_path_factory.mktemp("toy")
    return generate_toy_dataset(root, 10, 3, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """record(n, ok, detail) -> ok; the line is printed and repeated in the terminal summary."""
    lines = request.config.stash[ACCEPTANCE]

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((n, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda item: item[0]):
            terminalreporter.write_line(line)
