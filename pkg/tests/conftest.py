import re

CRITERIA = {
    1: "teleported CNOT closed form vs circuit",
    2: "distillation recurrence vs circuit",
    3: "Barrett-Kok herald rates",
    4: "rate/fidelity threshold trade-off",
    5: "gen-1 repeater composition",
    6: "gen-2 parallel hop time and logical error",
    7: "connectivity arithmetic",
    8: "MDI QKD sessions",
    9: "CSV determinism",
    10: "overhead constants",
}


def pytest_terminal_summary(terminalreporter):
    seen = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", getattr(rep, "nodeid", ""))
            if m and rep.when in ("call", "setup"):
                n = int(m.group(1))
                if seen.get(n) != "FAIL":
                    seen[n] = "PASS" if outcome == "passed" else "FAIL"
    if not seen:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(seen):
        terminalreporter.write_line(f"criterion {n:2d} {seen[n]}: {CRITERIA[n]}")
