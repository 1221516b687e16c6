import numpy as np
import pytest

from verimpqc import qsim

AXIS_STATES = [
    qsim.KET0,
    qsim.KET1,
    qsim.PLUS,
    np.array([1, -1], dtype=complex) / np.sqrt(2),
    np.array([1, 1j], dtype=complex) / np.sqrt(2),
    np.array([1, -1j], dtype=complex) / np.sqrt(2),
]


def random_state(rng: np.random.Generator, n: int = 1) -> np.ndarray:
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return v / np.linalg.norm(v)


def random_density(rng: np.random.Generator, n: int = 1) -> np.ndarray:
    a = rng.normal(size=(2**n, 2**n)) + 1j * rng.normal(size=(2**n, 2**n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)



# -- acceptance reporting ----------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str, float]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call":
        return
    number, title = mark.args
    _CRITERIA[number] = (title, "PASS" if report.passed else "FAIL", report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, seconds = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}  ({seconds:.1f} s)")
