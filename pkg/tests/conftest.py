import pytest

from hapens.library import SyntheticConfig, generate_synthetic

from helpers import make_library


@pytest.fixture
def tiny_lib():
    """Three binary models on four validation samples."""
    return make_library(
        [[0.9, 0.8, 0.3, 0.1], [0.6, 0.7, 0.4, 0.5], [0.2, 0.9, 0.8, 0.1]],
        [1, 1, 0, 0],
        costs=[(0.1, 100.0, 50.0), (0.2, 300.0, 10.0), (0.9, 50.0, 70.0)],
    )


@pytest.fixture(scope="session")
def synth20():
    return generate_synthetic(SyntheticConfig(p=20, n_val=300, n_test=300, seed=11))


_CRITERIA: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    failed = report.failed
    if report.when == "call" or failed:
        prev = _CRITERIA.get(n)
        status = "FAIL" if failed or (prev and prev[1] == "FAIL") else "PASS"
        _CRITERIA[n] = (title, status, report.duration + (prev[2] if prev else 0.0))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status, secs = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {title} ({secs:.1f}s)")
