import time
import warnings

import pytest

from abple.kernels import ModelParams
from abple.saddle import SolverOptions
from abple.sweep import build_curve

SWEEP_RANGE = (0.90, 0.999)
SWEEP_STEP = 0.002

_RESULTS: list[tuple[str, bool, str]] = []
_CURVES: dict[float, tuple] = {}


def record(name: str, ok: bool, detail: str) -> None:
    _RESULTS.append((name, bool(ok), detail))


def sweep_curve(alpha: float):
    """Curve over the acceptance grid at kappa=0, built once per session."""
    if alpha not in _CURVES:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            t0 = time.perf_counter()
            curve = build_curve(ModelParams(alpha=alpha), SWEEP_RANGE, SWEEP_STEP,
                                SolverOptions())
            _CURVES[alpha] = (curve, time.perf_counter() - t0)
    return _CURVES[alpha]


@pytest.fixture(scope="session")
def curve_077():
    return sweep_curve(0.77)


@pytest.fixture(scope="session")
def curve_078():
    return sweep_curve(0.78)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
