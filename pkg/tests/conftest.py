import numpy as np
import pytest

from adaptris.channel import PatternModel, Scenario
from adaptris.geometry import build_hex_layout, paper_group_schedule

_CRITERIA: list[tuple[int, bool, str]] = []


@pytest.fixture(scope="session")
def layout127():
    return build_hex_layout(6, 8.7e-3, 6.6e-3, 6.6e-3)


@pytest.fixture(scope="session")
def mini_layout():
    return build_hex_layout(1, 8.7e-3, 6.6e-3, 6.6e-3)


@pytest.fixture(scope="session")
def schedule():
    return paper_group_schedule()


@pytest.fixture
def scenario():
    return Scenario(ue_position=(1.0, 0.5, 0.0))


@pytest.fixture
def cosine_pattern():
    return PatternModel("cosine", q_bs=1.0, q_ris=1.0, q_ue=1.0)


def random_scenario(rng: np.random.Generator) -> Scenario:
    """UE somewhere in front of the RIS, BS at the prototype position."""
    b = (rng.uniform(0.4, 2.0), rng.uniform(-0.6, 1.0), rng.uniform(-0.2, 0.2))
    return Scenario(ue_position=b)


@pytest.fixture
def criterion():
    """Record an acceptance criterion outcome; printed in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _CRITERIA.append((number, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
