"""Shared pytest hooks.

Tests marked ``@pytest.mark.criterion("<name>")`` report their outcome as a
single ``[PASS]``/``[FAIL] <name>`` line in the verbose output, so a plain
``pytest -v`` run doubles as the acceptance report.
"""


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(name): label a test as one acceptance criterion")
    config._criteria = {}


def pytest_collection_modifyitems(config, items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            config._criteria[item.nodeid] = mark.args[0]


def pytest_report_teststatus(report, config):
    name = getattr(config, "_criteria", {}).get(report.nodeid)
    if name is None or report.when != "call":
        return None
    if report.passed:
        return "passed", "P", f"PASSED  [PASS] {name}"
    if report.failed:
        return "failed", "F", f"FAILED  [FAIL] {name}"
    return None
