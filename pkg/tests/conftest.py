import pytest

_RESULTS = {}


@pytest.fixture
def measured(request):
    """Attach the measured quantity to the criterion's summary line."""
    def record(text):
        request.node.user_properties.append(("measured", text))
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and report.passed):
        return
    number, title = mark.args
    note = dict(item.user_properties).get("measured", "")
    _RESULTS[number] = (title, report.passed, f"{report.duration:.1f}s", note)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, passed, duration, note = _RESULTS[number]
        status = "PASS" if passed else "FAIL"
        extra = f" ({note})" if note else ""
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title}{extra} [{duration}]")
