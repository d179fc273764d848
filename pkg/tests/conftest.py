import zlib

import numpy as np
import pytest

from tucker_si.geometry import FeatureBasis, MetricContext, TuckerPoint
from tucker_si.objective import ProblemData, valid_rank
from tucker_si.observations import ObservationSet
from tucker_si.tensor import uf


def make_instance(rng, dims=None, rank=None, n_feat=None, alpha=None, metric="precond", frac=0.4):
    """Random point, observations and features; returns (point, data, ctx)."""
    if dims is None:
        dims = tuple(int(n) for n in rng.integers(4, 10, size=3))
    if rank is None:
        while True:
            rank = tuple(int(rng.integers(1, min(4, n - 1) + 1)) for n in dims)
            if valid_rank(rank):
                break
    N = int(np.prod(dims))
    m = max(int(frac * N), 1)
    lin = rng.choice(N, size=m, replace=False)
    idx = np.stack(np.unravel_index(lin, dims), axis=1)
    train = ObservationSet(dims, idx, rng.standard_normal(m))
    if n_feat is None:
        n_feat = [int(rng.integers(r, n + 1)) for n, r in zip(dims, rank)]
    feats = [rng.standard_normal((n, k)) for n, k in zip(dims, n_feat)]
    if alpha is None:
        alpha = rng.uniform(0.1, 1.0, size=3) / N
    data = ProblemData(train, FeatureBasis(feats, alpha, dims, m), rank)
    point = TuckerPoint(
        rng.standard_normal(rank), tuple(uf(rng.standard_normal((n, r))) for n, r in zip(dims, rank))
    )
    return point, data, MetricContext(point, data.features, metric)


@pytest.fixture
def rng(request):
    # a distinct, reproducible stream per test
    return np.random.default_rng(zlib.crc32(request.node.nodeid.encode()))


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].lstrip("C").rstrip(":"))):
            terminalreporter.write_line(line)
