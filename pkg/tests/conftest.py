def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for res in sorted(RESULTS, key=lambda r: r.number):
        tr.write_line(f"{res.line()} ({res.seconds:.1f}s)")
    tr.write_line(f"{sum(r.passed for r in RESULTS)}/{len(RESULTS)} criteria passed")
