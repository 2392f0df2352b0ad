import numpy as np
import pytest

from circdd.cover import make_cover
from circdd.interp import arc_interpolants
from circdd.problem import RectDomain


@pytest.fixture(scope="session")
def ref_domain():
    return RectDomain.square(50.0)


@pytest.fixture(scope="session")
def ref_cover(ref_domain):
    return make_cover(ref_domain, 10, 0.9, 44)


@pytest.fixture(scope="session")
def ref_interps(ref_cover):
    return arc_interpolants(ref_cover)


@pytest.fixture(scope="session")
def small_cover():
    return make_cover(RectDomain.square(20.0), 4, 0.9, 44)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_VERDICTS = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion, echoed in the summary."""
    store = request.config.stash.setdefault(_VERDICTS, {})

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        store[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_VERDICTS, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for number in sorted(store):
            terminalreporter.write_line(store[number])
