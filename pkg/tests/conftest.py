import numpy as np
import pytest

from tn2nn import random_mps
from tn2nn.pipeline import compile_full
from tn2nn.tensor_core import state_array


@pytest.fixture(scope="session")
def ref_mps():
    return random_mps(8, 2, 4, 42)


@pytest.fixture(scope="session")
def ref_states(ref_mps):
    return state_array(ref_mps.dims)


@pytest.fixture(scope="session")
def ref_compiled(ref_mps):
    return compile_full(ref_mps, "parallel", 1e-2)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
