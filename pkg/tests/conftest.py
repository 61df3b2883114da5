import pytest

_ACCEPTANCE_KEY = pytest.StashKey[list]()
_RECORDED_KEY = pytest.StashKey[set]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []
    config.stash[_RECORDED_KEY] = set()


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(number, title, passed, detail)``."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(number, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title}"
        if detail:
            line += f" ({detail})"
        lines.append((number, line))
        request.config.stash[_RECORDED_KEY].add(request.node.nodeid)
        print(line)
        return passed

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    # an acceptance test that crashed before recording still gets a FAIL line
    if (report.when == "call" and report.failed and "criterion" in item.fixturenames
            and item.nodeid not in item.config.stash[_RECORDED_KEY]):
        item.config.stash[_ACCEPTANCE_KEY].append((99, f"[FAIL] {item.name}: raised before reporting"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
