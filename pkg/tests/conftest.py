import numpy as np
import pytest

from hydranet.pipeline import SignalConfig, generate_synthetic_matches


@pytest.fixture(scope="session")
def small_corpus():
    """Twelve seeded synthetic matches shared by the slower tests."""
    return generate_synthetic_matches(12, seed=3)


@pytest.fixture(scope="session")
def single_set_corpus():
    return generate_synthetic_matches(4, seed=5, plant=SignalConfig(best_of=1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)



def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance PASS/FAIL lines after the run."""
    import sys

    mod = next((m for name, m in list(sys.modules.items()) if name.rsplit(".", 1)[-1] == "test_acceptance"), None)
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
