import numpy as np
import pytest

from rssbreath.core import PipelineConfig
from rssbreath.synth import breathing_scenario, generate

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def table1_config():
    return PipelineConfig()


@pytest.fixture(scope="session")
def breathing_trace():
    """300 s, 16 channels, 12 bpm, Table I rates, 1 dB quantization."""
    return generate(breathing_scenario(seed=0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
