import numpy as np
import pytest

from wrmc.bench import counterexample_f, counterexample_model


@pytest.fixture(scope="session")
def ce_model():
    return counterexample_model()


@pytest.fixture(scope="session")
def ce_f():
    return counterexample_f()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num])
