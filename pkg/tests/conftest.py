import numpy as np
import pytest

from sarincrust.core import SeedSpec, derive_stream

# filled by test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return derive_stream(SeedSpec(12345, 0))


def random_raster(rng, h, w, scale=1.0):
    return ((rng.standard_normal((h, w)) + 1j * rng.standard_normal((h, w))) * scale).astype(np.complex64)
