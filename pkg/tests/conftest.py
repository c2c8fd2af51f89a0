"""Per-criterion pass/fail reporting for the acceptance suite."""

import pytest

CRITERIA = {
    "A1": "closed-form maximizer vs 41x41 grid",
    "A2": "Danskin gradient vs finite differences",
    "A3": "disagreement ratio per step-size halving",
    "A4": "MSD ratio per halving and initial geometric decay",
    "A5": "running-average excess risk decays like 1/N",
    "A6": "MLP Moreau stationarity measure decreases",
    "A7": "adversarial network more robust than clean network",
    "A8": "strategy equivalences and unified recursion",
    "A9": "gradient-noise variance scales like 1/B",
    "A10": "byte-identical metrics, any worker count",
}

_outcome = {}
_detail = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    cid = marker.args[0]
    if report.failed:
        _outcome[cid] = "FAIL"
    elif report.skipped:
        _outcome.setdefault(cid, "SKIP")
    elif report.when == "call":
        _outcome.setdefault(cid, "PASS")


@pytest.fixture
def detail(request):
    """Attach a short measurement summary to the test's criterion line."""
    cid = request.node.get_closest_marker("criterion").args[0]

    def put(text):
        _detail[cid] = f"{_detail[cid]}; {text}" if cid in _detail else text

    return put


def pytest_terminal_summary(terminalreporter):
    if not _outcome:
        return
    terminalreporter.section("acceptance criteria")
    for cid in CRITERIA:
        if cid in _outcome:
            extra = f" ({_detail[cid]})" if cid in _detail else ""
            terminalreporter.write_line(f"{cid:4s} {_outcome[cid]}  {CRITERIA[cid]}{extra}")
