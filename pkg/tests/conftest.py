import numpy as np
import pytest

from nrasqn import MinimalSurface, build_mesh


@pytest.fixture
def rng():
    return np.random.default_rng(20221)


@pytest.fixture(scope="session")
def mesh4():
    return build_mesh(4, 4)


@pytest.fixture(scope="session")
def surf16():
    return MinimalSurface.on_grid(16)



def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            for key, value in rep.user_properties:
                if key == "acceptance":
                    lines.append((value, outcome.upper()[:4]))
    if lines:
        terminalreporter.section("acceptance criteria")
        for text, status in sorted(lines):
            terminalreporter.write_line(f"[{'PASS' if status == 'PASS' else 'FAIL'}] {text}")
