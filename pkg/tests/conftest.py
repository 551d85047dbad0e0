import pytest

_LINES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES_KEY] = []


@pytest.fixture
def acceptance_log(request):
    """Record a one-line PASS/FAIL verdict and fail the test when the criterion is not met."""
    lines = request.config.stash[_LINES_KEY]

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        lines.append((number, line))
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def example4_run(tmp_path_factory):
    """The example4 benchmark at its default configuration (seed 1), run once per session."""
    from dyngp.benchmarks import run_example4

    out = tmp_path_factory.mktemp("example4")
    return out, run_example4(out, seed=1)
