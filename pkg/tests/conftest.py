import sys
import numpy as np
import pytest

from vbob import load_builtin


@pytest.fixture(scope="session")
def su2():
    return load_builtin("su2-star")


@pytest.fixture(scope="session")
def trivial():
    return load_builtin("sphere-trivial")


@pytest.fixture(scope="session")
def solid():
    return load_builtin("solid-angle")


@pytest.fixture(scope="session")
def t1():
    return load_builtin("t1-toy")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
