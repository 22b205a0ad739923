import pytest

RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[RESULTS] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(name, passed, detail)``, then assert."""

    def record(name, passed, detail):
        request.config.stash[RESULTS].append((name, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
        assert passed, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    results = terminalreporter.config.stash[RESULTS]
    if results:
        terminalreporter.section("acceptance criteria")
        for name, passed, detail in results:
            terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
