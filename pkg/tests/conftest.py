import os
from pathlib import Path

import numpy as np
import pytest

from hydra_tsc import TimeSeriesDataset

UCR_DIR = Path(__file__).parent / "data" / "ucr"
DEV_SUITE = ("ArrowHead", "GunPoint", "ItalyPowerDemand", "OSULeaf", "PickupGestureWiimoteZ")

_acceptance_lines = []


class AcceptanceRecorder:
    """Collects one verdict per acceptance criterion for the summary."""

    def __init__(self, criterion):
        self.criterion = criterion

    def check(self, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        _acceptance_lines.append(f"[{status}] {self.criterion}: {detail}")
        print(f"\n[{status}] {self.criterion}: {detail}")
        assert passed, f"{self.criterion}: {detail}"


@pytest.fixture
def acceptance(request):
    marker = request.node.get_closest_marker("criterion")
    name = marker.args[0] if marker else request.node.name
    return AcceptanceRecorder(name)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ucr_dir():
    return UCR_DIR


def make_dataset(n=20, L=40, n_classes=2, seed=0, name="toy"):
    """Small dataset whose classes differ by a bump position."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % n_classes
    t = np.arange(L)
    series = 0.3 * rng.standard_normal((n, L))
    for i, c in enumerate(labels):
        centre = (c + 1) * L / (n_classes + 1)
        series[i] += np.exp(-0.5 * ((t - centre) / 2.0) ** 2) * 2.0
    return TimeSeriesDataset(name, series, labels, tuple(str(c) for c in range(n_classes)))


@pytest.fixture
def toy_split():
    return make_dataset(24, 40, 3, seed=1), make_dataset(18, 40, 3, seed=2)


def ucr_root_env():
    return os.environ.get("HYDRA_UCR_ROOT")
