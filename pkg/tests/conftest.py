import collections

ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = collections.defaultdict(list)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p[1] for p in parts)
        failed = [p[0] for p in parts if not p[1]]
        tail = "" if ok else f" (failing: {', '.join(failed)})"
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}{tail}")
