import numpy as np
import pytest

from msgfem.coeffs import plane_wave_problem
from msgfem.decomp import build_pou, decompose

_ACCEPTANCE = []


def record(number: int, passed: bool, detail: str) -> None:
    _ACCEPTANCE.append((number, passed, detail))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_problem():
    """32x32 plane wave at k=10 with a 4x4 decomposition."""
    spec, pw = plane_wave_problem(32, 10.0)
    sset = decompose(spec.grid, 4, 4, 2, 2)
    return spec, pw, sset, build_pou(sset)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
