import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ppkrige.data import PointPattern, SiteSet
from ppkrige.basis import TimeDomain

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by tests/test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def random_pattern(rng, n, d, max_events, domain=TimeDomain(0.0, 1.0)):
    """Small random pattern with uniform event times (ties possible via rounding)."""
    coords = np.column_stack([np.arange(d, dtype=float), np.zeros(d)])
    sites = SiteSet(tuple(f"s{j}" for j in range(d)), coords)
    events = []
    for _ in range(n):
        row = []
        for _ in range(d):
            m = int(rng.integers(0, max_events + 1))
            t = domain.a + domain.length * rng.random(m)
            if m > 1 and rng.random() < 0.3:
                t[1] = t[0]
            row.append(t)
        events.append(row)
    return PointPattern(domain, sites, tuple(events))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
