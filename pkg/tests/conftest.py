from collections import OrderedDict

import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, label): acceptance criterion this test belongs to")
    config._criteria = OrderedDict()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    failed = rep.failed
    if rep.when != "call" and not failed and not rep.skipped:
        return
    num, label = mark.args
    entry = item.config._criteria.setdefault(num, {"label": label, "failed": False, "ran": False, "notes": []})
    entry["ran"] = entry["ran"] or (rep.when == "call" and not rep.skipped)
    entry["failed"] = entry["failed"] or failed
    for key, value in item.user_properties:
        if key == "measured":
            entry["notes"].append(value)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    criteria = getattr(config, "_criteria", {})
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(criteria):
        e = criteria[num]
        status = "FAIL" if e["failed"] else ("PASS" if e["ran"] else "SKIP")
        terminalreporter.write_line(f"criterion {num:>2} {status}  {e['label']}")
        for note in dict.fromkeys(e["notes"]):
            terminalreporter.write_line(f"              {note}")
