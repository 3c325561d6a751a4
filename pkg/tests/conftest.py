import pytest

from sgdchain.noise import RngStream, gen_regression_data
from sgdchain.objectives import CauchyRegMLE

# criterion number -> list of {"nodeid", "detail", "ok"}
_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def regression_objective():
    ds = gen_regression_data(100, 4, 10, RngStream(11, 0))
    return CauchyRegMLE(ds.X, ds.y, 0.1)


@pytest.fixture
def acceptance(request):
    """``acceptance(number, detail)`` registers the running test under a criterion.

    The criterion is reported PASS in the terminal summary only if every
    test registered under it passed.
    """
    def record(number, detail=""):
        _ACCEPTANCE.setdefault(number, []).append(
            {"nodeid": request.node.nodeid, "detail": detail, "ok": False})

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    for entries in _ACCEPTANCE.values():
        for e in entries:
            if e["nodeid"] != item.nodeid:
                continue
            if report.when == "call":
                e["ok"] = report.passed
            elif report.failed:
                e["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        entries = _ACCEPTANCE[number]
        ok = all(e["ok"] for e in entries)
        detail = "; ".join(e["detail"] for e in entries if e["detail"])
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
