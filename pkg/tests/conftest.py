import numpy as np
import pytest
from hypothesis import strategies as st

from sldgeom.autoparallel import random_states


def random_hermitian(d, rng, scale=1.0):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * 0.5 * (g + g.conj().T)


def random_state(d, rng):
    return random_states(d, 1, rng)[0]


def random_bloch(rng, rmax=0.95):
    r = rng.normal(size=3)
    return r / np.linalg.norm(r) * rmax * rng.random() ** (1 / 3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=2, max_value=6)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num])
