import pytest

# criterion number -> [title, all passed, number of tests run]
_acceptance: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        outcome.get_result().user_properties.append(("acceptance", marker.args))


def pytest_runtest_logreport(report):
    for key, args in report.user_properties:
        if key != "acceptance":
            continue
        number, title = args
        entry = _acceptance.setdefault(number, [title, True, 0])
        if report.failed or (report.when == "call" and report.skipped):
            entry[1] = False
        if report.when == "call":
            entry[2] += 1


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, ok, n_run = _acceptance[number]
        status = "PASS" if ok and n_run else "FAIL"
        terminalreporter.write_line(f"criterion {number} ({title}): {status}")
