import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print the acceptance checklist after the run, one line per criterion."""
    for name in ("test_acceptance", "tests.test_acceptance"):
        mod = sys.modules.get(name)
        if mod is not None and getattr(mod, "RESULTS", None):
            terminalreporter.write_sep("=", "acceptance criteria")
            for line in mod.RESULTS:
                terminalreporter.write_line(line)
            break
