import numpy as np
import pytest

from downturn_lgd import ModelParams, ObservationSeries
from downturn_lgd.data_io import generate_synthetic

REFERENCE = dict(p=0.0167, rho=0.0635, mu=0.411, sigma=0.499, omega=0.0192)


@pytest.fixture
def reference():
    return ModelParams(**REFERENCE)


@pytest.fixture(scope="session")
def small_series():
    """29 years of 2500 firms, roughly the size of an agency default history."""
    return generate_synthetic(ModelParams(**REFERENCE), T=29, J=2500, seed=7, start_year=1982)


@pytest.fixture
def tiny_series():
    return ObservationSeries(
        years=np.array([2001, 2002, 2003, 2004, 2005]),
        firms=np.array([400, 420, 410, 390, 405]),
        defaults=np.array([5, 12, 3, 0, 7]),
        avg_recovery=np.array([0.42, 0.31, 0.55, np.nan, 0.47]),
    )


# -- acceptance report -------------------------------------------------------------

_ACCEPTANCE = {}


@pytest.fixture
def record():
    """Log one acceptance line; returns the verdict so tests can assert on it."""

    def _record(cid, ok, detail):
        _ACCEPTANCE[cid] = (bool(ok), detail)
        print(f"criterion {cid}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_ACCEPTANCE, key=lambda c: (int(c.rstrip("abc")), c)):
        ok, detail = _ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid:<3} {'PASS' if ok else 'FAIL'}  {detail}")
