import re

_CRITERIA = {}
_PATTERN = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+?)(\[.*\])?$")


def pytest_runtest_logreport(report):
    m = _PATTERN.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        num = int(m.group(1))
        name = m.group(2).replace("_", " ")
        entry = _CRITERIA.setdefault(num, {"name": name, "ok": True, "parts": []})
        entry["ok"] &= report.outcome == "passed"
        entry["parts"].append((m.group(3) or "", report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        entry = _CRITERIA[num]
        detail = ", ".join(f"{p or 'main'}={o}" for p, o in entry["parts"])
        status = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {num}: {status}  {entry['name']}  ({detail})")
