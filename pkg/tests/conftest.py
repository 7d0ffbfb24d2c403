import zlib

import numpy as np
import pytest

_ACCEPTANCE = []


@pytest.fixture
def rng(request):
    # seeded from the test name so reordering tests never changes their data
    return np.random.default_rng(zlib.crc32(request.node.name.encode()))


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""

    def report(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def random_psd(rng, dim):
    g = rng.standard_normal((dim, dim))
    return g @ g.T
