import pytest

from percolab import _kernels

# filled by test_acceptance.py, printed after the run
ACCEPTANCE_LINES: list[str] = []

BACKENDS = [_kernels.python_backend]
if _kernels.compiled_backend is not None:
    BACKENDS.insert(0, _kernels.compiled_backend)


@pytest.fixture(params=BACKENDS, ids=lambda b: b.__name__.rsplit(".", 1)[-1])
def backend(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
