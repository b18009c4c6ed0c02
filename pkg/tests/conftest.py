import numpy as np
import pytest

from sdnf.model import FieldModel, FiringRate, StimulusSpec
from sdnf.spectral import build_basis


@pytest.fixture(scope="session")
def small_basis():
    return build_basis(100.0, 100, 10, 0.1)


@pytest.fixture(scope="session")
def desk_basis():
    return build_basis(100.0, 500, 50, 0.1)


@pytest.fixture(scope="session")
def logistic_model(desk_basis):
    return FieldModel(desk_basis, firing=FiringRate("logistic", 0.0, 10.0), noise_level=0.05)


@pytest.fixture(scope="session")
def quiet_stimulus():
    return StimulusSpec(baseline_on=0.0, baseline_off=0.0, amplitude=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line per acceptance criterion."""
    def emit(criterion, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
