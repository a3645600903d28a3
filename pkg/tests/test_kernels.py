"""Compiled Monte Carlo paths against the reference estimators."""

from itertools import combinations
from math import comb

import numpy as np
import pytest

from graphscan import _kernels
from graphscan.detectors import CusumDetector, GlrScanDetector
from graphscan.evaluation import NULL_STREAM, path_statistics, simulate_records
from graphscan.graph_model import ChangeScenario, make_rng, sample_sequence


def _both_paths(detector, scenario, horizon, seed):
    fast = path_statistics(detector, scenario, horizon, make_rng(seed))
    slow = detector.decision_function(sample_sequence(scenario, horizon, make_rng(seed)))
    return fast, slow


@pytest.mark.parametrize(
    "detector, N",
    [
        (CusumDetector(subgraph=(1, 3, 4)), 7),
        (GlrScanDetector(community_size=3, max_lookback=6), 7),
        (GlrScanDetector(community_size=4, min_lookback=3, max_lookback=5), 8),
        (GlrScanDetector(community_size=3, max_lookback=6, scan_mode="greedy"), 9),
        (GlrScanDetector(community_size=4, p0=0.5, p1=0.2, max_lookback=4, scan_mode="greedy"), 8),
        (GlrScanDetector(community_size=3, p0=0.6, p1=0.3, max_lookback=5), 7),
        (GlrScanDetector(community_size=3, p1=None, max_lookback=4), 7),
    ],
)
@pytest.mark.parametrize("tau", [1, 15, float("inf")])
def test_kernel_paths_are_bit_identical(detector, N, tau):
    n = detector.community_size if isinstance(detector, GlrScanDetector) else 3
    sc = ChangeScenario(N, n, tuple(range(1, n + 1)), detector.p0, detector.p1 or 0.5, change_point=tau)
    fast, slow = _both_paths(detector, sc, 40, seed=int(N * 7 + n))
    assert np.array_equal(fast, slow)


def test_exhaustive_kernel_full_size_snapshot():
    det = GlrScanDetector(community_size=5, max_lookback=8)
    sc = ChangeScenario(20, 5, (0, 1, 2, 3, 4), 0.2, 0.5, change_point=5)
    fast, slow = _both_paths(det, sc, 12, seed=3)
    assert np.array_equal(fast, slow)


def test_records_match_exact_paths():
    # pruned record search reproduces the running maximum of the exact path
    det = GlrScanDetector(community_size=3, max_lookback=10)
    sc = ChangeScenario.null(9, 3, 0.2, 0.5)
    rec = simulate_records(det, sc, 5, seed=4, level_cap=np.inf, horizon=300, stream=NULL_STREAM)
    for i in range(5):
        rng = make_rng(np.random.SeedSequence(4, spawn_key=(NULL_STREAM, i)))
        path = path_statistics(det, sc, 300, rng)
        running = np.maximum.accumulate(path)
        rises = np.flatnonzero(np.diff(np.concatenate([[-np.inf], running])) > 0)
        assert np.array_equal(rec.times[i], rises + 1)
        assert np.array_equal(rec.values[i], path[rises])


def test_record_stopping_times_equal_direct_first_passage():
    det = CusumDetector(subgraph=(0, 1, 2))
    sc = ChangeScenario.null(6, 3, 0.2, 0.5)
    rec = simulate_records(det, sc, 8, seed=5, level_cap=6.0, horizon=5000)
    for b in (0.5, 2.0, 4.5, 6.0):
        stops, censored = rec.stopping_times(b)
        for i in range(8):
            rng = make_rng(np.random.SeedSequence(5, spawn_key=(NULL_STREAM, i)))
            path = det.decision_function(sample_sequence(sc, int(stops[i]), rng))
            hit = np.flatnonzero(path > b)
            if censored[i]:
                assert hit.size == 0
            else:
                assert hit[0] + 1 == stops[i]


@pytest.mark.parametrize("N, n", [(6, 2), (7, 3), (9, 4), (10, 5), (8, 6)])
def test_subset_edge_counts_against_itertools(N, n):
    rng = make_rng(N * n)
    adj = np.triu(rng.integers(0, 2, (N, N)), 1).astype(np.int64)
    out = np.empty(comb(N, n), np.int64)
    _kernels.subset_edge_counts(adj, n, out)
    expected = [sum(adj[i, j] for i, j in combinations(sub, 2)) for sub in combinations(range(N), n)]
    assert out.tolist() == expected
