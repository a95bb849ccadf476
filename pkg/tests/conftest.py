from __future__ import annotations

import numpy as np
import pytest

from oscamp import defaults
from oscamp.model import euler_model
from oscamp.spectral import mode_package

SQ3 = float(np.sqrt(3.0))


@pytest.fixture(scope="session")
def euler():
    return euler_model(*defaults.EULER_POINT)


@pytest.fixture(scope="session")
def ms(euler):
    return mode_package(euler)


@pytest.fixture(scope="session")
def demo():
    return defaults.default_model()


@pytest.fixture(scope="session")
def demo_ms(demo):
    return mode_package(demo)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, name: str, ok: bool, detail: str, seconds: float) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {name} ({detail}; {seconds:.1f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
