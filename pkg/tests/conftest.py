import itertools

import numpy as np
import pytest

from pxnet.relindex import pair_arrays


def brute_pairs(n):
    """All ordered dyad pairs split by how many actors they share."""
    I, J = pair_arrays(n)
    sets = [frozenset((int(a), int(b))) for a, b in zip(I, J)]
    out = {0: [], 1: [], 2: []}
    for d, e in itertools.product(range(len(sets)), repeat=2):
        out[len(sets[d] & sets[e])].append((d, e))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
