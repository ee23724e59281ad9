import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(number, title, limit): acceptance criterion with a runtime limit in seconds")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    # a skipif marker skips during setup, so the call phase never runs
    if not (rep.when == "call" or (rep.when == "setup" and rep.skipped)):
        return
    number, title, limit = mark.args
    if rep.passed and rep.duration > limit:
        rep.outcome = "failed"
        rep.longrepr = f"runtime {rep.duration:.1f}s exceeds the {limit}s limit"
    status = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
    _RESULTS[number] = (title, status, rep.duration, limit)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, status, duration, limit = _RESULTS[number]
        terminalreporter.write_line(
            f"criterion {number:>2} {status}  {title}  ({duration:.1f}s, limit {limit}s)")
