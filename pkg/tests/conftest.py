import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from xlayer import _accel
from xlayer.reliability import LinkTrace, ReliabilityScheme
from xlayer.trace import PhyTrace

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

MS = 1_000_000


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    old = _accel.backend()
    _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(old)


def ms_trace(td_ms, dt_ms, lldu_size=100, capacity=1_600_000_000):
    """Trace from millisecond lists; the default airtime is 500 ns."""
    td = np.round(np.asarray(td_ms, dtype=float) * MS).astype(np.int64)
    dt = np.round(np.asarray(dt_ms, dtype=float) * MS).astype(np.int64)
    return PhyTrace.from_arrays(td, dt, lldu_size, capacity)


def make_link(td_ms, dtp_ms, delivered=None, drop_ms=None, slot=MS, lldu_size=100):
    n = len(td_ms)
    td = (np.asarray(td_ms, float) * MS).astype(np.int64)
    dtp = (np.asarray(dtp_ms, float) * MS).astype(np.int64)
    delivered = np.ones(n, bool) if delivered is None else np.asarray(delivered, bool)
    drop = np.zeros(n, np.int64) if drop_ms is None else (np.asarray(drop_ms, float) * MS).astype(np.int64)
    dtp = np.where(delivered, dtp, 0)
    return LinkTrace(td, dtp, delivered, np.zeros(n, np.int64), np.arange(n), drop,
                     np.zeros(n, bool), np.ones(n), ReliabilityScheme.none(), n,
                     lldu_size, lldu_size * 8 * 1_000_000_000 // slot, slot)


def pytest_terminal_summary(terminalreporter):
    from . import verdicts
    if verdicts.LINES:
        terminalreporter.section("acceptance criteria")
        for line in verdicts.LINES:
            terminalreporter.write_line(line)
