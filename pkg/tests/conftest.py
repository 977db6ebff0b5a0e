import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        num, title = mark.args
        msg = ""
        if rep.failed:
            msg = str(call.excinfo.value).strip().splitlines()[0] if call.excinfo else "failed"
        _RESULTS[num] = (title, rep.passed, msg)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        title, ok, msg = _RESULTS[num]
        line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {title}"
        if msg:
            line += f" -- {msg[:160]}"
        terminalreporter.write_line(line)
