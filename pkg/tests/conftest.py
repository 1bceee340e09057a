import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the one-line acceptance verdicts after output capture ends."""
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not getattr(mod, "REPORT_LINES", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.REPORT_LINES:
        terminalreporter.write_line(line)
