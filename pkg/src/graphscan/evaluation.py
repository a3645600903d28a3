"""Monte Carlo run lengths: ARL / EDD estimation, threshold calibration, bound checks.

Simulated paths are summarised by their *records* (times at which the running
maximum of the detection statistic increases).  Because a detector's
statistic does not depend on its threshold, the stopping time for any
threshold ``b`` is the first record time with value above ``b``, and one set
of paths answers every threshold up to the level it was simulated to.

Replication ``i`` of a run draws its snapshots from
``SeedSequence(seed, spawn_key=(stream, i))`` with ``stream`` 0 for
no-change paths and 1 for paths changing at t = 1, so results do not depend
on the order in which replications are computed, and CUSUM and GLR runs with
the same seed see the same graphs.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from math import comb

import numpy as np

from graphscan import _kernels
from graphscan.detectors import CusumDetector, GlrScanDetector
from graphscan.graph_model import ChangeScenario, make_rng, sample_bits, subgraph_pairs
from graphscan.likelihood import make_weights
from graphscan.subgraph_scan import enumerate_candidates

__all__ = [
    "CalibrationError",
    "CalibrationResult",
    "FalseAlarmCheck",
    "RunLengthEstimate",
    "RunLengthRecords",
    "TradeoffPoint",
    "arl_lower_bound",
    "calibrate_analytic",
    "calibrate_empirical",
    "estimate_arl",
    "estimate_edd",
    "log_binomial",
    "simulate_records",
    "tradeoff_curve",
    "verify_false_alarm_bound",
    "write_tradeoff_csv",
]

log = logging.getLogger(__name__)

NULL_STREAM = 0
CHANGE_STREAM = 1
DEFAULT_EDD_HORIZON = 100_000

_FIRST_BLOCK = 16
_MAX_BLOCK = 2048


class CalibrationError(RuntimeError):
    """The target ARL cannot be bracketed."""


# ------------------------------------------------------------------ runners


def community_size_of(detector) -> int:
    if isinstance(detector, CusumDetector):
        return len(detector.subgraph)
    return detector.community_size


def min_stop_time(detector) -> int:
    """Earliest time at which ``detector`` can raise an alarm."""
    return detector.min_lookback if isinstance(detector, GlrScanDetector) else 1


class _Runner:
    """One path's detector state, fed block by block."""

    def feed(self, bits, level_cap, stats_out):
        raise NotImplementedError


class _CusumRunner(_Runner):
    def __init__(self, detector, num_nodes, shared):
        self.pairs = shared
        w = make_weights(detector.p0, detector.p1)
        self.w = (w.w_present, w.w_absent)
        self.state = np.array([0.0, 0.0, -np.inf])

    def feed(self, bits, level_cap, stats_out):
        rec_t = np.empty(bits.shape[0], np.int64)
        rec_v = np.empty(bits.shape[0])
        used, n, stop = _kernels.cusum_block(bits, self.pairs, *self.w, self.state, level_cap, rec_t, rec_v, stats_out)
        return used, rec_t[:n], rec_v[:n], stop


class _ExhaustiveRunner(_Runner):
    def __init__(self, detector, num_nodes, shared):
        cfg = detector.window_config()
        w = make_weights(detector.p0, detector.p1)
        n = detector.community_size
        self.args = (num_nodes, n, w.w_present, w.w_absent, cfg.min_lookback, cfg.max_lookback)
        self.ring = np.zeros((cfg.max_lookback, shared), np.uint8)
        self.bound = np.zeros(shared)
        self.state = np.array([0.0, -np.inf])

    def feed(self, bits, level_cap, stats_out):
        rec_t = np.empty(bits.shape[0], np.int64)
        rec_v = np.empty(bits.shape[0])
        used, n, stop = _kernels.exhaustive_block(
            bits, *self.args, self.ring, self.bound, self.state, level_cap, rec_t, rec_v, stats_out
        )
        return used, rec_t[:n], rec_v[:n], stop


class _GreedyRunner(_Runner):
    def __init__(self, detector, num_nodes, shared):
        cfg = detector.window_config()
        w = make_weights(detector.p0, detector.p1)
        sign = 1.0 if w.contrast > 0 else -1.0
        self.args = (num_nodes, detector.community_size, sign, w.w_present, w.w_absent, cfg.min_lookback, cfg.max_lookback)
        self.ring = np.zeros((cfg.max_lookback + 1, num_nodes * (num_nodes - 1) // 2), np.int64)
        self.state = np.array([0.0, -np.inf])

    def feed(self, bits, level_cap, stats_out):
        rec_t = np.empty(bits.shape[0], np.int64)
        rec_v = np.empty(bits.shape[0])
        used, n, stop = _kernels.greedy_block(bits, *self.args, self.ring, self.state, level_cap, rec_t, rec_v, stats_out)
        return used, rec_t[:n], rec_v[:n], stop


class _GenericRunner(_Runner):
    """Falls back on the reference estimator (MLE mode, connected-only scans)."""

    def __init__(self, detector, num_nodes, shared):
        self.det = detector.__class__(**detector.get_params())
        self.det._reset(num_nodes)
        self.record = -np.inf

    def feed(self, bits, level_cap, stats_out):
        rec_t, rec_v = [], []
        for row_i, row in enumerate(bits):
            self.det._update(row.astype(bool))
            stat = self.det.statistics_[-1]
            if stats_out.shape[0]:
                stats_out[row_i] = stat
            if stat > self.record:
                self.record = stat
                rec_t.append(len(self.det.statistics_))
                rec_v.append(stat)
                if stat > level_cap:
                    return row_i + 1, np.array(rec_t, np.int64), np.array(rec_v), True
        return bits.shape[0], np.array(rec_t, np.int64), np.array(rec_v), False


def _runner_factory(detector, num_nodes):
    """Pick a kernel for ``detector`` and precompute what all paths share."""
    if isinstance(detector, CusumDetector):
        return _CusumRunner, subgraph_pairs(detector.subgraph, num_nodes).astype(np.int64)
    cfg = detector.window_config()
    if detector.p1 is None or cfg.connected_only:
        return _GenericRunner, None
    if cfg.scan_mode == "greedy":
        return _GreedyRunner, None
    cands = enumerate_candidates(num_nodes, detector.community_size, cfg.candidate_cap)
    if not cands.exhaustive:
        raise ValueError("exhaustive scan above the candidate cap; use scan_mode='greedy'")
    return _ExhaustiveRunner, len(cands)


def path_statistics(detector, scenario: ChangeScenario, horizon: int, rng) -> np.ndarray:
    """Statistic at every step of one path drawn from ``rng`` (kernel route).

    Draws exactly what :func:`graphscan.graph_model.sample_sequence` would.
    """
    cls, shared = _runner_factory(detector, scenario.num_nodes)
    runner = cls(detector, scenario.num_nodes, shared)
    bits = sample_bits(scenario, 1, horizon, rng).view(np.uint8)
    out = np.empty(horizon)
    runner.feed(bits, np.inf, out)
    return out


# ------------------------------------------------------------------ records


@dataclass
class RunLengthRecords:
    """Record times/values per simulated path.

    Stopping times are exact for thresholds up to ``level_cap``; a path that
    never crossed it ran to ``horizon`` and is censored there.
    """

    times: list[np.ndarray]
    values: list[np.ndarray]
    level_cap: float
    horizon: int
    min_time: int = 1

    @property
    def replications(self) -> int:
        return len(self.times)

    def stopping_times(self, threshold: float) -> tuple[np.ndarray, np.ndarray]:
        """``(T, censored)`` arrays for the rule "stop when statistic > threshold"."""
        if threshold > self.level_cap:
            raise ValueError(f"threshold {threshold} above the simulated level {self.level_cap}")
        stops = np.empty(self.replications, np.int64)
        censored = np.zeros(self.replications, bool)
        for i, (ts, vs) in enumerate(zip(self.times, self.values)):
            j = int(np.searchsorted(vs, threshold, side="right"))
            if j < vs.size:
                stops[i] = ts[j]
            else:
                stops[i] = self.horizon
                censored[i] = True
        return stops, censored

    def estimate(self, threshold: float, alternate: float | None = None, weight: float = 0.0) -> RunLengthEstimate:
        """Run length at ``threshold``; with ``alternate``, of the randomized rule using it w.p. ``weight``."""
        stops, censored = self.stopping_times(threshold)
        main = RunLengthEstimate.from_samples(stops, censored)
        if alternate is None or weight == 0.0:
            return main
        return RunLengthEstimate.mixture(self.estimate(alternate), main, weight)

    def mean(self, threshold: float) -> float:
        return float(self.stopping_times(threshold)[0].mean())

    def lowest_record(self) -> float:
        firsts = [v[0] for v in self.values if v.size]
        return min(firsts) if firsts else -np.inf


@dataclass(frozen=True)
class RunLengthEstimate:
    mean: float
    se: float
    replications: int
    censored_frac: float

    @property
    def lower_bound(self) -> bool:
        """Censored runs make the mean an underestimate."""
        return self.censored_frac > 0

    @classmethod
    def from_samples(cls, stops, censored) -> RunLengthEstimate:
        stops = np.asarray(stops, dtype=float)
        se = float(stops.std(ddof=1) / math.sqrt(stops.size)) if stops.size > 1 else math.nan
        return cls(float(stops.mean()), se, int(stops.size), float(np.mean(censored)))

    @classmethod
    def mixture(cls, first: RunLengthEstimate, second: RunLengthEstimate, weight: float) -> RunLengthEstimate:
        """Run length of the rule that follows ``first`` with probability ``weight``, else ``second``."""
        q, r = weight, first.replications
        mean = q * first.mean + (1 - q) * second.mean
        var = (q * first.se**2 + (1 - q) * second.se**2) * r + q * (1 - q) * (first.mean - second.mean) ** 2
        censored = q * first.censored_frac + (1 - q) * second.censored_frac
        return cls(mean, math.sqrt(var / r), r, censored)


def simulate_records(
    detector,
    scenario: ChangeScenario,
    replications: int,
    seed: int,
    level_cap: float,
    horizon: int,
    stream: int = NULL_STREAM,
) -> RunLengthRecords:
    """Simulate ``replications`` paths under ``scenario`` until the running max exceeds ``level_cap``."""
    if replications < 1 or horizon < 1:
        raise ValueError("replications and horizon must be >= 1")
    cls, shared = _runner_factory(detector, scenario.num_nodes)
    times, values = [], []
    for i in range(replications):
        rng = make_rng(np.random.SeedSequence(seed, spawn_key=(stream, i)))
        runner = cls(detector, scenario.num_nodes, shared)
        t, block = 0, _FIRST_BLOCK
        path_t, path_v = [], []
        empty = np.empty(0)
        while t < horizon:
            count = min(block, horizon - t)
            bits = sample_bits(scenario, t + 1, count, rng).view(np.uint8)
            used, rt, rv, stopped = runner.feed(bits, level_cap, empty)
            path_t.append(rt)
            path_v.append(rv)
            t += used
            if stopped:
                break
            block = min(2 * block, _MAX_BLOCK)
        times.append(np.concatenate(path_t) if path_t else np.empty(0, np.int64))
        values.append(np.concatenate(path_v) if path_v else np.empty(0))
    return RunLengthRecords(times, values, float(level_cap), int(horizon), min_stop_time(detector))


def _null_scenario(detector, num_nodes: int) -> ChangeScenario:
    return ChangeScenario.null(num_nodes, community_size_of(detector), detector.p0, detector.p1 or 0.5)


def _change_scenario(scenario: ChangeScenario) -> ChangeScenario:
    return scenario.with_change_point(1)


# ------------------------------------------------------------- ARL and EDD


def estimate_arl(detector, num_nodes: int, replications: int = 200, horizon: int | None = None, seed: int = 0):
    """Mean stopping time on no-change streams, censoring runs at ``horizon``."""
    horizon = horizon or 100_000
    rec = simulate_records(detector, _null_scenario(detector, num_nodes), replications, seed,
                           float(detector.threshold), horizon, NULL_STREAM)
    return rec.estimate(float(detector.threshold))


def estimate_edd(detector, scenario: ChangeScenario, replications: int = 200, seed: int = 0,
                 horizon: int = DEFAULT_EDD_HORIZON):
    """Mean stopping time when the change is already active at t = 1.

    This is the E_1[T] surrogate, not the worst-case (Lorden) delay.
    """
    rec = simulate_records(detector, _change_scenario(scenario), replications, seed,
                           float(detector.threshold), horizon, CHANGE_STREAM)
    return rec.estimate(float(detector.threshold))


# ------------------------------------------------------------ calibration


def log_binomial(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


@dataclass
class CalibrationResult:
    target_arl: float | None = None
    alpha: float | None = None
    b_analytic: float | None = None
    b_empirical: float | None = None
    arl_estimate: float | None = None
    arl_se: float | None = None
    censored_frac: float | None = None
    within_tolerance: bool | None = None
    records: RunLengthRecords | None = field(default=None, repr=False)
    # randomized rule: use b_alternate instead of b_empirical with probability mix_weight
    b_alternate: float | None = None
    mix_weight: float = 0.0

    def estimate(self, records: RunLengthRecords) -> RunLengthEstimate:
        """Run length of the calibrated (possibly randomized) rule on other paths."""
        return records.estimate(self.b_empirical, self.b_alternate, self.mix_weight)

    @property
    def threshold(self) -> float:
        return self.b_empirical if self.b_empirical is not None else self.b_analytic


def calibrate_analytic(alpha: float, m_alpha: int, num_nodes: int, community_size: int) -> CalibrationResult:
    """Threshold b solving 2 m e^{-b} C(N, n) = alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    b = math.log(2 * m_alpha) + log_binomial(num_nodes, community_size) - math.log(alpha)
    return CalibrationResult(alpha=alpha, b_analytic=b)


def arl_lower_bound(alpha: float, m_alpha: int) -> float:
    """(1/2 - alpha)(m / (2 alpha) - 1)."""
    return (0.5 - alpha) * (m_alpha / (2.0 * alpha) - 1.0)


def _level_increment(records: RunLengthRecords, target_arl: float, fallback: float) -> float:
    # log ARL is close to linear in b; extrapolate from the last nat simulated
    top = records.level_cap
    lower = top - 1.0
    if lower <= records.lowest_record():
        return fallback
    slope = math.log(records.mean(top)) - math.log(records.mean(lower))
    if slope <= 0.05:
        return fallback
    step = (math.log(target_arl) - math.log(records.mean(top))) / slope + 0.25
    return min(max(step, 0.25), 3.0)


def calibrate_empirical(
    detector,
    num_nodes: int,
    target_arl: float,
    tolerance: float = 0.1,
    replications: int = 200,
    seed: int = 0,
    horizon: int | None = None,
    records: RunLengthRecords | None = None,
    level_step: float = 1.5,
    max_iter: int = 200,
    randomize: bool = False,
) -> CalibrationResult:
    """Find b whose estimated ARL is within ``tolerance * target_arl`` of ``target_arl``.

    ARL is nondecreasing in b, so the search brackets and bisects over the
    thresholds; paths are re-simulated only when the bracket has to grow.
    Pass ``records`` to reuse paths across several targets.

    The statistics live on a lattice (``W * ln(p1/p0) + (slots - W) *
    ln((1-p1)/(1-p0))``), so the ARL is a step function of b and a step can
    jump over the whole tolerance band.  With ``randomize`` such a target is
    met by the randomized rule that picks, once per run, the threshold just
    below the jump with probability ``mix_weight`` and the one above it
    otherwise; its ARL and delay are the matching mixtures.
    """
    if target_arl < 1:
        raise ValueError("target_arl must be >= 1")
    if target_arl * (1 + tolerance) < min_stop_time(detector):
        raise CalibrationError(
            f"target ARL {target_arl} is below the earliest possible alarm time {min_stop_time(detector)}"
        )
    horizon = horizon or int(math.ceil(50 * target_arl))
    scenario = _null_scenario(detector, num_nodes)
    level = records.level_cap if records is not None else max(math.log(target_arl), 1.0)
    while True:
        if records is None or records.level_cap < level:
            records = simulate_records(detector, scenario, replications, seed, level, horizon, NULL_STREAM)
        arl_top = records.mean(records.level_cap)
        if arl_top >= target_arl:
            break
        _, censored = records.stopping_times(records.level_cap)
        if censored.all():
            raise CalibrationError(f"target ARL {target_arl} not reachable within horizon {horizon}")
        level = records.level_cap + _level_increment(records, target_arl, level_step)
        log.debug("raising simulated level to %.3f (ARL there %.1f)", level, arl_top)

    lo, hi = records.lowest_record() - 1.0, records.level_cap
    best = hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        arl = records.mean(mid)
        if abs(arl - target_arl) < abs(records.mean(best) - target_arl):
            best = mid
        if abs(arl - target_arl) <= tolerance * target_arl * 0.5 or hi - lo < 1e-9:
            break
        if arl < target_arl:
            lo = mid
        else:
            hi = mid
    alternate, weight = None, 0.0
    if randomize and abs(records.mean(best) - target_arl) > tolerance * target_arl * 0.5:
        # lo and hi straddle a jump of the step function
        below, above = records.mean(lo), records.mean(hi)
        if below < target_arl <= above:
            best, alternate = hi, lo
            weight = (above - target_arl) / (above - below)
    est = records.estimate(best, alternate, weight)
    return CalibrationResult(
        target_arl=target_arl,
        b_empirical=best,
        arl_estimate=est.mean,
        arl_se=est.se,
        censored_frac=est.censored_frac,
        within_tolerance=abs(est.mean - target_arl) <= tolerance * target_arl,
        records=records,
        b_alternate=alternate,
        mix_weight=weight,
    )


# ------------------------------------------------------ false-alarm bound


@dataclass(frozen=True)
class FalseAlarmCheck:
    empirical: float
    se: float
    bound: float
    replications: int

    @property
    def vacuous(self) -> bool:
        return self.bound >= 1.0

    @property
    def passed(self) -> bool:
        return self.empirical <= self.bound + 3.0 * self.se


def verify_false_alarm_bound(detector: GlrScanDetector, num_nodes: int, tau: int = 1,
                             replications: int = 5000, seed: int = 0) -> FalseAlarmCheck:
    """Empirical P(tau <= T < tau + m) on no-change streams against 2 m e^{-b} C(N, n)."""
    cfg = detector.window_config()
    m, b = cfg.max_lookback, float(detector.threshold)
    horizon = tau + m - 1
    rec = simulate_records(detector, _null_scenario(detector, num_nodes), replications, seed, b, horizon)
    stops, censored = rec.stopping_times(b)
    hits = (~censored) & (stops >= tau) & (stops <= horizon)
    p = float(hits.mean())
    se = math.sqrt(max(p * (1 - p), 1.0 / replications) / replications)
    log_bound = math.log(2 * m) - b + log_binomial(num_nodes, detector.community_size)
    return FalseAlarmCheck(p, se, math.exp(min(log_bound, 700.0)), replications)


# --------------------------------------------------------- tradeoff curve


@dataclass(frozen=True)
class TradeoffPoint:
    detector: str
    threshold: float
    arl: float
    arl_se: float
    edd: float
    edd_se: float
    reps_arl: int
    reps_edd: int
    censored_frac: float

    @property
    def arl_is_lower_bound(self) -> bool:
        return self.censored_frac > 0


def tradeoff_curve(
    detectors: dict,
    scenario: ChangeScenario,
    thresholds,
    replications_arl: int = 200,
    replications_edd: int = 200,
    seed: int = 0,
    horizon: int = 100_000,
) -> list[TradeoffPoint]:
    """(ARL, EDD) at each threshold for each named detector, on common random numbers."""
    grid = sorted(float(b) for b in thresholds)
    if not grid:
        raise ValueError("empty threshold grid")
    points = []
    for name, det in detectors.items():
        null = simulate_records(det, _null_scenario(det, scenario.num_nodes), replications_arl, seed,
                                grid[-1], horizon, NULL_STREAM)
        post = simulate_records(det, _change_scenario(scenario), replications_edd, seed,
                                grid[-1], horizon, CHANGE_STREAM)
        for b in grid:
            arl, edd = null.estimate(b), post.estimate(b)
            points.append(TradeoffPoint(name, b, arl.mean, arl.se, edd.mean, edd.se,
                                        arl.replications, edd.replications, arl.censored_frac))
    return points


CSV_HEADER = ["detector", "b", "arl", "arl_se", "edd", "edd_se", "reps_arl", "reps_edd", "censored_frac"]


def _g(x: float) -> str:
    return f"{x:.6g}"


def write_tradeoff_csv(points, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for p in points:
        writer.writerow([p.detector, _g(p.threshold), _g(p.arl), _g(p.arl_se), _g(p.edd), _g(p.edd_se),
                         p.reps_arl, p.reps_edd, _g(p.censored_frac)])
