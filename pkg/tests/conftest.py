import numpy as np
import pytest

from sleepdiff.config import ExperimentConfig
from sleepdiff.data.synth import generate_domains


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    """Five synthetic domains, three 20-epoch recordings each."""
    root = tmp_path_factory.mktemp("domains")
    generate_domains(root, n_recordings=3, n_epochs=20, seed=11)
    return root


@pytest.fixture
def small_config():
    return ExperimentConfig(d=16, n_layers=1, mdta_heads=2, seq_heads=4, batch=4, epochs=1,
                            dtype="float64", dropout=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
