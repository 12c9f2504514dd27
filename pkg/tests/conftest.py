def pytest_terminal_summary(terminalreporter):
    """Print the acceptance criteria lines collected by tests/test_acceptance.py."""
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(results):
        terminalreporter.write_line(line)
