import pytest

from nkdna.agent import HyperParams, train
from nkdna.environment import default_maze


@pytest.fixture(scope="session")
def maze():
    return default_maze()


@pytest.fixture(scope="session")
def trained(maze):
    """Default-hyperparameter run, seed 7."""
    return train(maze, HyperParams(seed=7))


@pytest.fixture(scope="session")
def untrained(maze):
    return train(maze, HyperParams(seed=7, episodes=0))


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    reports = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when == "call" and "test_acceptance.py::test_criterion" in rep.nodeid:
                reports.append(rep)
    if not reports:
        return
    terminalreporter.section("acceptance criteria")
    for rep in sorted(reports, key=lambda r: r.nodeid):
        name = rep.nodeid.split("::")[-1].removeprefix("test_")
        detail = dict(rep.user_properties).get("detail", "")
        terminalreporter.write_line(f"{'PASS' if rep.passed else 'FAIL'}  {name}  {detail}")
