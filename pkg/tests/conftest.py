import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(params=["python", "cython"])
def kernel_backend(request):
    """Run a test once per kernel backend; skips cython when it is not built."""
    from podfusion.regressor import kernels

    if request.param not in kernels.available():
        pytest.skip(f"{request.param} kernels not built")
    previous = kernels.backend()
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
