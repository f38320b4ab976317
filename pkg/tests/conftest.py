import numpy as np
import pytest

from rilab.interlace import make_window
from rilab.potential import GreenTable


@pytest.fixture(scope="session")
def greens3():
    """Shared d=3 Green table with the near-origin block prefilled."""
    gt = GreenTable(d=3)
    gt.bulk_fill_box(4)
    return gt


@pytest.fixture(scope="session")
def window2(greens3):
    return make_window(2, greens=greens3)


@pytest.fixture(scope="session")
def window4(greens3):
    return make_window(4, greens=greens3)


@pytest.fixture(scope="session")
def window16(greens3):
    """Large relaxed window used by phase scans (N = 2L at L = 8)."""
    return make_window(16, relaxed_bias=True, greens=greens3)


def occupancy_grid(window, words: np.ndarray) -> np.ndarray:
    bits = np.unpackbits(words.view(np.uint8), bitorder="little")
    return bits[:window.nsites].astype(bool).reshape((window.side,) * window.d)
