import numpy as np
import pytest

from evtrack.events import EventStream, EventWindow


def make_window(
    events,
    index=1,
    dt_us=50_000,
    width=64,
    height=48,
):
    """EventWindow from (t, x, y, p) tuples; t relative to the window start."""
    events = sorted(events)
    t_start = (index - 1) * dt_us
    return EventWindow(
        index=index,
        t_start=t_start,
        t_end=index * dt_us,
        t=np.array([t_start + e[0] for e in events], np.uint64),
        x=np.array([e[1] for e in events], np.uint16),
        y=np.array([e[2] for e in events], np.uint16),
        p=np.array([e[3] for e in events], np.uint8),
        width=width,
        height=height,
    )


def random_stream(rng, n, width=320, height=240, t_max=1_000_000):
    t = np.sort(rng.integers(0, t_max, n).astype(np.uint64))
    return EventStream(
        width,
        height,
        t,
        rng.integers(0, width, n).astype(np.uint16),
        rng.integers(0, height, n).astype(np.uint16),
        rng.integers(0, 2, n).astype(np.uint8),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
