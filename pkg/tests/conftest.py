import os

import pytest


@pytest.fixture(scope="session", autouse=True)
def oracle_cache(tmp_path_factory):
    """Keep oracle caches out of the user's home directory during tests."""
    if "DPINN_CACHE" not in os.environ:
        os.environ["DPINN_CACHE"] = str(tmp_path_factory.mktemp("oracle_cache"))
    yield os.environ["DPINN_CACHE"]


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def criterion(request):
    """``criterion(n, passed, detail)`` records one pass/fail line for the summary.

    A test that errors before reporting is recorded as a failure.
    """
    reported = []

    def report(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        request.config.acceptance_lines.append(line)
        reported.append(number)
        return passed

    yield report
    if not reported:
        line = f"{request.node.name}: FAIL  raised before reporting"
        print(line)
        request.config.acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter, config):
    if config.acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in config.acceptance_lines:
            terminalreporter.write_line(line)
