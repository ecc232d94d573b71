import re
import time
from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nmerci import nn
from nmerci.metric import EvalSet
from nmerci.nn import MlpSpec

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE: list[tuple[str, str, bool, str]] = []


def random_set(rng: np.random.Generator, n: int, positive_errors: bool = True) -> EvalSet:
    """Prediction/target pairs with errors spread over several magnitudes."""
    y_true = rng.normal(0.0, 5.0, n)
    eps = rng.lognormal(0.0, 1.0, n)
    if not positive_errors:
        eps[rng.random(n) < 0.1] = 0.0
    sign = rng.choice([-1.0, 1.0], n)
    sigma = rng.lognormal(0.0, 1.0, n)
    return EvalSet(y_true + sign * eps, sigma, y_true)


@pytest.fixture(scope="session", autouse=True)
def compiled_kernels():
    """Compile the training kernel for 1-3 hidden layers before any timed test.

    The first compile after a fresh install takes several seconds; later
    sessions load it from numba's on-disk cache.
    """
    x, y = np.zeros((2, 1)), np.zeros(2)
    for hidden in [(2,), (2, 2), (2, 2, 2)]:
        nn.grad(nn.init(MlpSpec(1, hidden, 0.0, seed=0)), x, y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class _Record:
    detail = ""


@pytest.fixture
def acceptance():
    """``with acceptance("AC1", "title", limit_s) as rec:`` records PASS/FAIL and runtime."""

    @contextmanager
    def check(key: str, title: str, limit_s: float = None):
        rec = _Record()
        t0 = time.perf_counter()
        try:
            yield rec
        except BaseException as exc:
            _ACCEPTANCE.append((key, title, False, f"{rec.detail} {type(exc).__name__}: {exc}".strip()))
            raise
        elapsed = time.perf_counter() - t0
        ok = limit_s is None or elapsed < limit_s
        limit = "" if limit_s is None else f" (limit {limit_s:g} s)"
        _ACCEPTANCE.append((key, title, ok, f"{rec.detail} [{elapsed:.2f} s{limit}]".strip()))
        assert ok, f"{key} took {elapsed:.2f} s, limit {limit_s} s"

    return check


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key, title, ok, detail in sorted(_ACCEPTANCE, key=lambda r: (int(re.match(r"AC(\d+)", r[0]).group(1)), r[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {key} {title}: {detail}")
