import pytest

from streid.types import Observation


def obs(oid, identity, camera, timestamp, state=0):
    return Observation(oid, identity, camera, float(timestamp), state)


@pytest.fixture
def three_cameras():
    """cam1: two hops to cam2 and one to cam3; cam1 state 0 always goes to cam2."""
    return [
        obs("a0", "A", 1, 0, 0),
        obs("a1", "A", 2, 50, 1),
        obs("b0", "B", 1, 10, 0),
        obs("b1", "B", 2, 70, 0),
        obs("c0", "C", 1, 20, 1),
        obs("c1", "C", 3, 220, 0),
    ]


_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed or (report.when == "call" and report.skipped)
    prev = _criteria.get(number, (title, True))
    _criteria[number] = (title, prev[1] and not failed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}")
