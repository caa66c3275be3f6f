import sys


def pytest_terminal_summary(terminalreporter):
    # pass/fail lines from the acceptance module; fd capture hides them during the run
    for mod in list(sys.modules.values()):
        results = getattr(mod, "RESULTS", None)
        if isinstance(results, dict) and getattr(mod, "__name__", "").endswith("test_acceptance"):
            if results:
                terminalreporter.section("acceptance criteria")
                for key in sorted(results):
                    terminalreporter.write_line(results[key])
            return
