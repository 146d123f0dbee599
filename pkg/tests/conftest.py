import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rbiga import kernels
from rbiga.case import Case

settings.register_profile("rbiga", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("rbiga")


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    """Run the test once per available kernel backend."""
    with kernels.use_backend(request.param) as impl:
        yield impl


@pytest.fixture(scope="session")
def pipeline0():
    return Case.preset("pipeline", 0)


@pytest.fixture(scope="session")
def cylinder0():
    return Case.preset("cylinder", 0)


@pytest.fixture(scope="session")
def pipeline_model(pipeline0):
    space, model, history = pipeline0.offline(train="lattice=4x4x4", tol=1e-6, n_max=30)
    return space, model, history


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ----------------------------------------------------------------

_ACCEPTANCE = []


@pytest.fixture
def acceptance(capsys):
    """``record(name, ok, detail)`` prints one PASS/FAIL line and returns ``ok``."""
    def record(name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
