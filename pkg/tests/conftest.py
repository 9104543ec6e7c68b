import pytest

from shiftbp.law import make_law

L_STAR_PAIRS = [((0, 0), 0.3), ((1, 0), 0.2), ((0, 2), 0.5)]
L_SUB_PAIRS = [((0, 0), 0.5), ((1, 0), 0.2), ((0, 1), 0.3)]
CRITICAL_PAIRS = [((0, 0), 0.4), ((1, 0), 0.2), ((0, 2), 0.4)]


@pytest.fixture(scope="session")
def lstar():
    return make_law("L*", L_STAR_PAIRS)


@pytest.fixture(scope="session")
def lsub():
    return make_law("L_sub", L_SUB_PAIRS)


@pytest.fixture(scope="session")
def critical():
    return make_law("critical", CRITICAL_PAIRS)


@pytest.fixture(scope="session")
def lstar_candidate(lstar):
    from shiftbp.construct import construct_fixed_point

    return construct_fixed_point(lstar)


# one PASS/FAIL line per acceptance criterion, aggregated over its tests
_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


def pytest_runtest_logreport(report):
    marks = getattr(report, "criterion", None)
    if marks is None:
        return
    n, title = marks
    entry = _criteria.setdefault(n, {"title": title, "ok": True, "ran": False})
    if report.when == "call":
        entry["ran"] = True
    if report.failed or (report.when == "call" and report.skipped):
        entry["ok"] = False


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result().criterion = tuple(mark.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        status = "PASS" if e["ok"] and e["ran"] else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {status}  {e['title']}")
