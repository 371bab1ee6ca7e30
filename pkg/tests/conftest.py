def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_fbr_acceptance", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s[2:s.index("]")])):
            terminalreporter.write_line(line)
