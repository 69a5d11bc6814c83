import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record(criterion, part, ok, detail):
    """Log one sub-check of an acceptance criterion for the end-of-run summary."""
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(ok), detail))
    print(f"criterion {criterion} [{part}]: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{p}: {'ok' if ok else 'failed'} ({d})" for p, ok, d in parts)
        terminalreporter.write_line(f"criterion {c}: {status}  {detail}")
