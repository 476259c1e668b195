from pathlib import Path

import pytest

from syncstl.scenario import load_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

# criterion number -> (description, outcome); filled by test_acceptance
ACCEPTANCE: dict[int, list] = {}


@pytest.fixture(scope="session")
def case1():
    return load_scenario(SCENARIOS / "example1_case1.yaml")


@pytest.fixture(scope="session")
def desk():
    return load_scenario(SCENARIOS / "desk.yaml")


@pytest.fixture(scope="session")
def toy():
    return load_scenario(SCENARIOS / "toy_sync.yaml")


def pytest_runtest_logreport(report):
    marker = "test_acceptance.py::test_criterion_"
    if marker not in report.nodeid:
        return
    num = int(report.nodeid.split(marker)[1].split("_")[0])
    entry = ACCEPTANCE.setdefault(num, [report.nodeid.split("::")[-1].split("[")[0], "PASS"])
    if report.failed or (report.when == "call" and report.skipped):
        entry[1] = "FAIL" if report.failed else "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        name, outcome = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {outcome}  ({name})")
