import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from posesync.experiments import CubeConfig, generate_cube  # noqa: E402
from posesync.kernels import available_backends  # noqa: E402
from posesync.matrices import build_data_matrices  # noqa: E402


@pytest.fixture(params=available_backends())
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def zero_noise_cube():
    graph, gt = generate_cube(CubeConfig(s=3, p_lc=0.3, sigma_r=0.0, sigma_t=0.0, seed=3))
    return graph, gt, build_data_matrices(graph)


@pytest.fixture(scope="session")
def noisy_cube():
    graph, gt = generate_cube(CubeConfig(s=3, p_lc=0.3, sigma_r=0.1, sigma_t=0.5, seed=4))
    return graph, gt, build_data_matrices(graph)


# -- acceptance summary --------------------------------------------------------

_ACCEPTANCE = []


@pytest.fixture
def record_criterion():
    """Record ``(criterion, status, detail)``; printed at the end of the run."""

    def record(criterion, passed, detail, status=None):
        status = status or ("PASS" if passed else "FAIL")
        line = f"[acceptance] {criterion}: {status} - {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
