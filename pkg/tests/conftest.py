import numpy as np
import pytest

from riemoc.scenario import builtin_scenario

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            num, title = mark.args
            _criteria.setdefault(num, {"title": title, "ok": True, "seen": False})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark and (rep.when == "call" or rep.failed):
        entry = _criteria[mark.args[0]]
        entry["seen"] = True
        entry["ok"] = entry["ok"] and not rep.failed


def pytest_terminal_summary(terminalreporter):
    ran = {k: v for k, v in _criteria.items() if v["seen"]}
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ran):
        entry = ran[num]
        terminalreporter.write_line(f"criterion {num:2d}  {'PASS' if entry['ok'] else 'FAIL'}  {entry['title']}")


@pytest.fixture(scope="session")
def example():
    """The built-in two-objective example on the log-paraboloid, T = 1, N = 2000."""
    return builtin_scenario("example-exg", T=1.0, steps=2000)


@pytest.fixture(scope="session")
def example_traj(example):
    return example.problem.candidate()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
