import hypothesis
import numpy as np
import pytest

from envra.stats import GroupedSample

hypothesis.settings.register_profile("default", deadline=None, max_examples=60)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile("default")

CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""

    def record(number: int, ok: bool, detail: str):
        CRITERIA.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        print(CRITERIA[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture
def two_groups(rng):
    return GroupedSample.from_groups([rng.normal(size=12), rng.normal(0.5, 1.5, size=9)])


@pytest.fixture
def three_groups(rng):
    return GroupedSample.from_groups([rng.normal(size=8), rng.normal(1, 1, size=10), rng.exponential(size=7)],
                                     names=["a", "b", "c"])
