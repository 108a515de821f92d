import numpy as np
import pytest

from homoclinic.discretization import Grid
from homoclinic.minimax import SolverConfig, mountain_pass_solve, prepare
from homoclinic.problem import paper_example
from homoclinic.verify import WorkspaceCache, refine_and_compare


@pytest.fixture(scope="session")
def paper_spec():
    return paper_example(a=3.0)


@pytest.fixture(scope="session")
def small_ws(paper_spec):
    """Paper example on a coarse grid for quick functional checks."""
    return prepare(paper_spec, Grid(8.0, 399))


@pytest.fixture(scope="session")
def default_ws(paper_spec):
    return prepare(paper_spec, Grid(12.0, 2399))


@pytest.fixture(scope="session")
def default_solve(default_ws):
    return mountain_pass_solve(default_ws, SolverConfig())


@pytest.fixture(scope="session")
def default_verification(default_ws, default_solve, paper_spec):
    cache = WorkspaceCache(paper_spec, default_ws.m0)
    return refine_and_compare(default_solve, default_ws, SolverConfig(), cache=cache)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion in the terminal summary
_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    number, title = mark.args
    status = "FAIL" if rep.failed else "SKIP" if rep.skipped else "PASS"
    if _criteria.get(number, ("", ""))[1] == "FAIL":
        status = "FAIL"
    _criteria[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")
