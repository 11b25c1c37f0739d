import numpy as np
import pytest

from irforge.synth import synthetic_bundle, synthetic_occultant, textured_background


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def bundle():
    return synthetic_bundle(seed=3)


@pytest.fixture(scope="session")
def background():
    return textured_background(seed=5)


@pytest.fixture(scope="session")
def occultant():
    return synthetic_occultant(seed=7)


# ---------------------------------------------------------------- acceptance
# Every test marked ``criterion`` contributes to one pass/fail line per
# criterion in the terminal summary.

_criteria = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    number, title = marker
    entry = _criteria.setdefault(number, {"title": title, "passed": True, "tests": []})
    entry["passed"] &= report.passed
    entry["tests"].append((report.nodeid.split("::")[-1], report.outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report._criterion = (marker.args[0], marker.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["passed"] else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {entry['title']}")
        if not entry["passed"]:
            for name, outcome in entry["tests"]:
                if outcome != "passed":
                    terminalreporter.write_line(f"         {outcome}: {name}")
