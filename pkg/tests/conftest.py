import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cpaudit import Dataset, LinearMean, calibrate
from cpaudit.scores import ABS_RESIDUAL

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def zero_model():
    return LinearMean(np.zeros(1), 0.0)


@pytest.fixture
def cp_1_to_19(zero_model):
    calib = Dataset(np.zeros((19, 1)), np.arange(1.0, 20.0), role="calibration")
    return calibrate(zero_model, ABS_RESIDUAL, calib)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line, then fail the test if the criterion failed."""
    log = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(label, ok, detail):
        log.append((label, bool(ok), detail))
        assert ok, f"{label}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(ACCEPTANCE, [])
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(log, key=lambda r: int(r[0].split()[0][2:])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
