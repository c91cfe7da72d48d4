import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

# lines recorded by the acceptance tests, echoed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
