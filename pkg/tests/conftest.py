import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from phasehit import load_model  # noqa: E402


@pytest.fixture(scope="session")
def s5():
    """The bundled 27-state lattice model."""
    return load_model("example_s5")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def s5_sample(s5):
    """One million simulated paths of the lattice model, long enough that
    nothing is censored."""
    from phasehit import simulate
    return simulate(s5, 10 ** 6, horizon=400.0, seed=7)


def pytest_terminal_summary(terminalreporter):
    import oracles
    if oracles.ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(oracles.ACCEPTANCE):
            terminalreporter.write_line(oracles.ACCEPTANCE[n])
