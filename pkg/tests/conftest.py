_acceptance_results: list[tuple[str, str]] = []


def pytest_runtest_makereport(item, call):
    if call.when != "call":
        return
    if item.fspath.basename != "test_acceptance.py":
        return
    status = "PASS" if call.excinfo is None else "FAIL"
    _acceptance_results.append((item.name, status))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, status in _acceptance_results:
        terminalreporter.write_line(f"{status}  {name}")
