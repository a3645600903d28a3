"""Acceptance checks.  Each test prints one ``ACCEPTANCE <id> PASS|FAIL`` line.

The Monte Carlo criteria (5 to 8) run at full size and take tens of minutes
on one core.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np
import pytest

from graphscan import cli
from graphscan.detectors import CusumDetector, GlrScanDetector, mle_p1, plugin_llr
from graphscan.evaluation import (
    CHANGE_STREAM,
    calibrate_analytic,
    calibrate_empirical,
    simulate_records,
    verify_false_alarm_bound,
)
from graphscan.graph_model import ChangeScenario, GraphSnapshot, make_rng, sample_bits, sample_sequence
from graphscan.likelihood import (
    EdgeCountMatrix,
    bernoulli_kl,
    change_information,
    make_weights,
    snapshot_llr,
    window_llr,
)
from graphscan.subgraph_scan import (
    WeightedPairGraph,
    best_subgraph,
    brute_force_densest,
    enumerate_candidates,
    greedy_densest,
    subset_weight,
)

P0, P1, N_SMALL, N_LARGE, COMMUNITY = 0.2, 0.5, 20, 50, 5
V_STAR = tuple(range(COMMUNITY))
# window held fixed while thresholds are calibrated (well above b / I at every target)
M_ALPHA = 25
TARGETS = (500.0, 2000.0, 5000.0)
REPS_ARL_GLR = 500
REPS_ARL_CUSUM = 2000
REPS_EDD = 2000
SEED = 20240601


@pytest.fixture
def report(capsys):
    def emit(label: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nACCEPTANCE {label} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def _scenario(num_nodes: int) -> ChangeScenario:
    return ChangeScenario(num_nodes, COMMUNITY, V_STAR, P0, P1, change_point=1)


# --------------------------------------------------------------------- 1


def test_criterion_1_information_constant(report):
    # independent scalar oracle
    oracle = 10 * (0.5 * math.log(0.5 / 0.2) + 0.5 * math.log(0.5 / 0.8))
    value = change_information(COMMUNITY, P0, P1)
    ok = abs(value - 2.231436) <= 1e-5 and abs(value - oracle) <= 1e-12
    report("1", ok, f"I = {value:.9f}, oracle {oracle:.9f}")


# --------------------------------------------------------------------- 2


def test_criterion_2_drift_signs(report):
    w = make_weights(P0, P1)
    rng = make_rng(SEED + 2)
    details, ok = [], True
    for label, sc, expected in (
        ("null", _scenario(N_SMALL).with_change_point(math.inf), -1.927450),
        ("post", _scenario(N_SMALL), 2.231436),
    ):
        bits = sample_bits(sc, 1, 100_000, rng)
        llr = np.array([snapshot_llr(GraphSnapshot(N_SMALL, row), V_STAR, w) for row in bits])
        se = llr.std(ddof=1) / math.sqrt(llr.size)
        good = abs(llr.mean() - expected) <= 3 * se
        ok &= good
        details.append(f"{label} mean {llr.mean():.5f} vs {expected} (3SE {3 * se:.5f})")
    report("2", ok, "; ".join(details))


# --------------------------------------------------------------------- 3


def test_criterion_3_window_statistic(report):
    rng = make_rng(SEED + 3)
    worst = 0.0
    for _ in range(1000):
        N = int(rng.integers(4, 13))
        n = int(rng.integers(2, N))
        T = int(rng.integers(1, 30))
        p0, p1 = rng.uniform(0.05, 0.95, 2)
        if abs(p0 - p1) < 1e-3:
            p1 = 1 - p0 if abs(1 - 2 * p0) > 1e-3 else 0.5 * p0
        V = sorted(rng.choice(N, n, replace=False).tolist())
        tau = int(rng.integers(1, T + 2))
        seq = sample_sequence(ChangeScenario(N, n, tuple(V), p0, p1, change_point=tau), T, rng)
        k = int(rng.integers(1, T + 1))
        t = int(rng.integers(k, T + 1))
        w = make_weights(p0, p1)
        direct = math.fsum(snapshot_llr(g, V, w) for g in seq[k - 1 : t])
        fast = window_llr(EdgeCountMatrix.from_snapshots(seq), k, t, V, w)
        worst = max(worst, abs(fast - direct) / max(abs(direct), 1e-300))
    report("3", worst <= 1e-10, f"max relative error {worst:.3g} over 1000 instances")


# --------------------------------------------------------------------- 4


def test_criterion_4_densest_subgraph(report):
    rng = make_rng(SEED + 4)
    violations, exact_hits = 0, 0
    for _ in range(1000):
        N = int(rng.integers(5, 11))
        n = int(rng.integers(2, 5))
        g = WeightedPairGraph(N, rng.random(math.comb(N, 2)))
        greedy, exact = greedy_densest(g, n), brute_force_densest(g, n)
        violations += subset_weight(g, greedy) > subset_weight(g, exact) + 1e-12
        exact_hits += greedy == exact
    recovered = 0
    for _ in range(1000):
        N = int(rng.integers(5, 11))
        n = int(rng.integers(2, 5))
        planted = sorted(rng.choice(N, n, replace=False).tolist())
        a = np.triu(rng.random((N, N)), 1)
        for i, j in combinations(planted, 2):
            a[i, j] = 10.0
        recovered += greedy_densest(WeightedPairGraph.from_matrix(a + a.T), n) == planted
    ok = violations == 0 and recovered == 1000
    report("4", ok, f"greedy > exact in {violations}/1000, greedy exact in {exact_hits}/1000, "
                    f"planted clique recovered {recovered}/1000")


# --------------------------------------------------------------------- 5


def test_criterion_5_false_alarm_bound(report):
    b = calibrate_analytic(0.05, 20, 10, 3).b_analytic
    det = GlrScanDetector(community_size=3, p0=P0, p1=P1, threshold=b, max_lookback=20)
    check = verify_false_alarm_bound(det, 10, tau=1, replications=5000, seed=SEED + 5)
    report("5", check.passed,
           f"b = {b:.4f}, P(alarm in [1, 20]) = {check.empirical:.4f} (SE {check.se:.4f}) vs bound {check.bound:.4f}")


# --------------------------------------------------------------------- 6


def _matched_delays(detector, num_nodes: int, reps_arl: int, targets=TARGETS):
    """Thresholds matched to each target ARL and the delays there."""
    cals, records = [], None
    for gamma in sorted(targets, reverse=True):
        res = calibrate_empirical(detector, num_nodes, gamma, replications=reps_arl, seed=SEED, records=records,
                                  randomize=True)
        records = res.records
        cals.append(res)
    cals.reverse()
    top = max(c.b_empirical for c in cals)
    post = simulate_records(detector, _scenario(num_nodes), REPS_EDD, SEED, top, 100_000, CHANGE_STREAM)
    return [(c, c.estimate(post)) for c in cals]


@pytest.fixture(scope="module")
def tradeoff():
    cusum = _matched_delays(CusumDetector(subgraph=V_STAR, p0=P0, p1=P1), N_SMALL, REPS_ARL_CUSUM)
    glr_det = GlrScanDetector(community_size=COMMUNITY, p0=P0, p1=P1, max_lookback=M_ALPHA)
    glr = _matched_delays(glr_det, N_SMALL, REPS_ARL_GLR)
    return {"cusum": cusum, "glr": glr}


def _slope(points) -> float:
    x = [math.log(c.arl_estimate) for c, _ in points]
    y = [e.mean for _, e in points]
    return float(np.polyfit(x, y, 1)[0])


def _describe(points) -> str:
    def rule(c):
        if c.b_alternate is None:
            return f"b={c.b_empirical:.3f}"
        return f"b={c.b_empirical:.3f}/{c.b_alternate:.3f} mix {c.mix_weight:.2f}"

    return ", ".join(f"{rule(c)} ARL={c.arl_estimate:.0f} EDD={e.mean:.3f}" for c, e in points)


def test_criterion_6a_matched_arls_and_ordering(report, tradeoff):
    matched = all(c.within_tolerance for pts in tradeoff.values() for c, _ in pts)
    ordered = all(g[1].mean >= c[1].mean for c, g in zip(tradeoff["cusum"], tradeoff["glr"]))
    report("6a", matched and ordered,
           f"ARLs within 10%: {matched}; EDD_GLR >= EDD_CUSUM: {ordered}; "
           f"cusum [{_describe(tradeoff['cusum'])}]; glr [{_describe(tradeoff['glr'])}]")


def test_criterion_6b_first_order_slopes(report, tradeoff):
    inv_info = 1.0 / change_information(COMMUNITY, P0, P1)
    s_c, s_g = _slope(tradeoff["cusum"]), _slope(tradeoff["glr"])
    ok = (abs(s_g - s_c) <= 0.25 * max(s_c, s_g) and abs(s_c - inv_info) <= 0.25 * inv_info
          and abs(s_g - inv_info) <= 0.25 * inv_info)
    report("6b", ok, f"slope CUSUM {s_c:.4f}, GLR {s_g:.4f}, 1/I = {inv_info:.4f}")


# --------------------------------------------------------------------- 7


def test_criterion_7_network_size(report, tradeoff):
    small = next(e for c, e in tradeoff["glr"] if c.target_arl == 2000.0)
    det = GlrScanDetector(community_size=COMMUNITY, p0=P0, p1=P1, max_lookback=M_ALPHA, scan_mode="greedy")
    [(cal, large)] = _matched_delays(det, N_LARGE, REPS_ARL_GLR, targets=(2000.0,))
    ok = cal.within_tolerance and large.mean >= small.mean - 1.0
    report("7", ok, f"EDD N=50 greedy {large.mean:.3f} (b={cal.b_empirical:.3f}, ARL {cal.arl_estimate:.0f}) "
                    f"vs N=20 exhaustive {small.mean:.3f}; {large.replications} and {small.replications} reps")


# --------------------------------------------------------------------- 8


def test_criterion_8_localization(report):
    cands = enumerate_candidates(N_SMALL, COMMUNITY)
    w = make_weights(P0, P1)
    sc = _scenario(N_SMALL)
    hits = 0
    for i in range(1000):
        rng = make_rng(np.random.SeedSequence(SEED + 8, spawn_key=(i,)))
        counts = sample_bits(sc, 1, 20, rng).sum(axis=0)
        nodes, _ = best_subgraph(WeightedPairGraph(N_SMALL, counts), cands, w, 20)
        hits += tuple(nodes) == V_STAR
    report("8", hits >= 950, f"V* recovered in {hits}/1000 windows of 20 snapshots")


# --------------------------------------------------------------------- 9


def test_criterion_9_unknown_p1_identity(report):
    rng = make_rng(SEED + 9)
    worst, checked = 0.0, 0
    while checked < 1000:
        N = int(rng.integers(4, 11))
        n = int(rng.integers(2, N))
        T = int(rng.integers(1, 25))
        p0, p1 = rng.uniform(0.05, 0.95, 2)
        if abs(p0 - p1) < 1e-3:
            continue
        V = sorted(rng.choice(N, n, replace=False).tolist())
        seq = sample_sequence(ChangeScenario(N, n, tuple(V), p0, p1, change_point=1), T, rng)
        k = int(rng.integers(1, T + 1))
        t = int(rng.integers(k, T + 1))
        counts = EdgeCountMatrix.from_snapshots(seq)
        slots = (t - k + 1) * math.comb(n, 2)
        W = int(sum(edge for g in seq[k - 1 : t] for edge in (g.has_edge(i, j) for i, j in combinations(V, 2))))
        if W in (0, slots) or abs(W / slots - p0) < 1e-12:
            continue  # clamped or degenerate windows are excluded
        p_hat = mle_p1(counts, k, t, V, clamp=1e-15)
        assert p_hat == W / slots
        plug = make_weights(p0, p_hat)
        direct = math.fsum(snapshot_llr(g, V, plug) for g in seq[k - 1 : t])
        identity = slots * bernoulli_kl(p_hat, p0)
        worst = max(worst, abs(direct - identity) / identity, abs(plugin_llr(W, slots, p0, p_hat) - identity) / identity)
        checked += 1
    report("9", worst <= 1e-10, f"max relative gap {worst:.3g} over {checked} windows")


# -------------------------------------------------------------------- 10


def test_criterion_10_cli_determinism(report, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("num_nodes = 12\ncommunity_size = 4\np0 = 0.2\np1 = 0.6\nchange_point = 10\nhorizon = 40\n"
                   "max_lookback = 8\nseed = 17\n")
    sim = tmp_path / "stream.txt"
    runs = {
        "simulate": [],
        "detect": ["--threshold", "7", "--input", str(sim)],
        "detect-mle": ["--detector", "glr-mle", "--threshold", "9", "--input", str(sim)],
        "calibrate": ["--target-arl", "200", "--replications", "50"],
        "calibrate-alpha": ["--alpha", "0.05"],
        "evaluate": ["--detector", "cusum,glr", "--thresholds", "3,5", "--replications", "30",
                     "--replications-edd", "30"],
        "evaluate-matched": ["--detector", "cusum,glr", "--target-arls", "50,100", "--replications", "50",
                             "--replications-edd", "30"],
        "localize": ["--k", "10", "--t", "30", "--input", str(sim)],
    }
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(sim)]) == cli.EXIT_OK
    same, failures = 0, []
    for name, extra in runs.items():
        cmd = name.split("-")[0]
        outs = []
        for rep in range(2):
            out = tmp_path / f"{name}.{rep}"
            code = cli.main([cmd, "--config", str(cfg), *extra, "--out", str(out)])
            outs.append((code, out.read_bytes()))
        if outs[0] == outs[1] and outs[0][0] in (cli.EXIT_OK, cli.EXIT_ALARM) and outs[0][1]:
            same += 1
        else:
            failures.append(name)
    report("10", not failures, f"{same}/{len(runs)} command runs byte-identical" +
           (f"; differing: {', '.join(failures)}" if failures else ""))
