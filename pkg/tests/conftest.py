"""Collects one pass/fail line per acceptance criterion and prints them at
the end of the session.

Tests opt in with ``@pytest.mark.criterion(n, title)`` and may attach a
measured detail through ``record_property("detail", ...)``.
"""

import pytest

_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")
    config.stash[_KEY] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when == "teardown" and rep.passed:
        return
    n, title = marker.args
    results = item.config.stash[_KEY]
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed:
        msg = str(rep.longrepr.reprcrash.message) if hasattr(rep.longrepr, "reprcrash") else "error"
        detail = f"{detail} | {msg.splitlines()[0]}" if detail else msg.splitlines()[0]
    ok = rep.passed and results.get(n, (True,))[0]
    if rep.when == "call" or rep.failed:
        results[n] = (ok, title, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, title, detail = results[n]
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
