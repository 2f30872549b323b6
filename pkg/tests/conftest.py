import pytest
from threadpoolctl import threadpool_limits

# criterion number -> (title, outcome, detail)
_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


@pytest.fixture(scope="session", autouse=True)
def single_threaded_blas():
    """BLAS reductions are only bit-reproducible at a fixed thread count."""
    with threadpool_limits(limits=1):
        yield


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (report.when == "call" or report.failed):
        return
    number, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if report.failed:
        message = str(call.excinfo.value).strip().splitlines() if call.excinfo else []
        detail = f"{detail}; {message[0] if message else 'failed'}".strip("; ")
    _ACCEPTANCE[number] = (title, "PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, outcome, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {outcome}: {title}: {detail}")
