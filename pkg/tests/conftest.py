import pytest

from ewreserve import kernels
from ewreserve.network import NetworkConfig, default_network

ACCEPTANCE_LINES = []

BACKENDS = ["python"] + (["cython"] if kernels.compiled is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    saved = kernels.backend
    kernels.use(request.param)
    yield request.param
    kernels.backend = saved


@pytest.fixture
def net3():
    return default_network()


@pytest.fixture
def two_node():
    # f_V = 0.05 x^2, k = 0.02 both ways
    return NetworkConfig((3, 3), (0.05, 0.05), (0.05, 0.05), ((0, 0.02), (0.02, 0)), budget=0.1,
                         reservation_floor=0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
