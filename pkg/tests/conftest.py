import numpy as np
import pytest

from riscovert import detector as det
from riscovert.experiment import DatasetSpec, generate_dataset, preset_topology

# Filled by test_acceptance.py; one (criterion, passed, detail) tuple per check.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture(scope="session")
def quick_models():
    """Lightly trained receiver/eavesdropper detectors for topology (c).

    Good enough to behave like energy detectors; used where a realistic but
    cheap model is needed.
    """
    topo = preset_topology("c")
    spec = DatasetSpec(samples_per_cell=60)
    cfg = det.TrainConfig(epochs=4, seed=5)
    rx = det.train(generate_dataset(topo, spec, "receiver", 101), cfg).model
    eve = det.train(generate_dataset(topo, spec, "eavesdropper", 102), cfg).model
    return rx, eve


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
