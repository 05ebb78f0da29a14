import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    number, title = crit
    entry = _RESULTS.setdefault(number, {"title": title, "ok": True, "ran": False, "detail": ""})
    if report.when == "call":
        entry["ran"] = True
    if report.failed:
        entry["ok"] = False
        msg = str(report.longrepr.reprcrash.message) if hasattr(report.longrepr, "reprcrash") else ""
        entry["detail"] = msg.splitlines()[0] if msg else report.when
    elif report.skipped and report.when != "teardown":
        entry["ok"] = None


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_RESULTS):
        e = _RESULTS[number]
        if e["ok"] is None:
            state = "SKIP"
        elif e["ok"] and e["ran"]:
            state = "PASS"
        else:
            state = "FAIL"
        line = f"criterion {number:2d} {state}  {e['title']}"
        if state == "FAIL" and e["detail"]:
            line += f"  [{e['detail']}]"
        tr.write_line(line)
