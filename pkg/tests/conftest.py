import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

_RESULTS: dict[str, list[tuple[str, str, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion this test checks")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = ""
        for name, text in item.user_properties:
            if name == "detail":
                detail = text
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _RESULTS.setdefault(mark.args[0], []).append((item.name, status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for label in sorted(_RESULTS):
        entries = _RESULTS[label]
        status = "PASS" if all(s == "PASS" for _, s, _ in entries) else "FAIL"
        tr.write_line(f"{status}  criterion {label}")
        for name, s, detail in entries:
            tr.write_line(f"        {s:4}  {name}" + (f"  [{detail}]" if detail else ""))
