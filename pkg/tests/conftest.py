import sys


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines after the run, one per criterion."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "_lines", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
