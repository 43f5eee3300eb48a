from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

#: one line per acceptance criterion, filled in by test_acceptance.report
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
