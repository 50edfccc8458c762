import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from afcsim import AbsorptionProfile, FrequencyGrid

settings.register_profile(
    "afcsim",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile("afcsim")


@pytest.fixture
def flat_profile():
    def make(depth, half_width=40e6, step=0.05e6, center=0.0):
        grid = FrequencyGrid.from_step(center, step, half_width)
        return AbsorptionProfile(grid, np.full(grid.n_points, float(depth)))

    return make


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the test body sets ``ok`` and ``detail``."""
    entry = {"name": request.node.name, "ok": False, "detail": "did not finish"}
    yield entry
    status = "PASS" if entry["ok"] else "FAIL"
    ACCEPTANCE_LINES.append(f"[{status}] {entry['label']}: {entry['detail']}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
