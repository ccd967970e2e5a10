import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("lipids", deadline=None, max_examples=60)
settings.load_profile("lipids")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_upper_dirs(rng, n, min_z=0.05):
    """Random unit vectors with z >= min_z."""
    out = []
    while len(out) < n:
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        if v[2] < 0:
            v[2] = -v[2]
        if v[2] >= min_z:
            out.append(v)
    return np.array(out)


ACCEPTANCE_LINES = []


def record_verdict(number, ok, detail):
    """Remember a criterion outcome for the end-of-run summary, then assert it."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
