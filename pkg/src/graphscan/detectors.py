"""Online stopping rules for a planted-community change in an ER graph stream.

Functional building blocks (``cusum_step``, ``glr_step``, ...) operate on
explicit state; :class:`CusumDetector` and :class:`GlrScanDetector` wrap them
as scikit-learn style estimators.

Window convention: at time ``t`` the GLR scan considers change-point
candidates ``k`` whose window ``k..t`` holds between ``min_lookback`` and
``max_lookback`` snapshots, i.e. ``t - max_lookback < k <= t - min_lookback + 1``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, replace
from math import comb

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from graphscan.graph_model import GraphSnapshot, edge_count_within, subgraph_pairs
from graphscan.likelihood import (
    EdgeCountMatrix,
    LlrWeights,
    change_information,
    llr_from_count,
    make_weights,
)
from graphscan.subgraph_scan import (
    DEFAULT_CANDIDATE_CAP,
    CandidateSet,
    WeightedPairGraph,
    best_subgraph,
    enumerate_candidates,
    greedy_densest,
    subset_weight,
)
from graphscan.validation import check_positive_int, check_probability, check_snapshots, check_subgraph

__all__ = [
    "Alarm",
    "CusumDetector",
    "CusumState",
    "GlrScanDetector",
    "GlrStep",
    "GlrWindowConfig",
    "StreamEnded",
    "admissible_starts",
    "cusum_step",
    "default_max_lookback",
    "glr_step",
    "glr_unknown_p1_step",
    "localize",
    "mle_p1",
    "run_cusum",
]

SCAN_MODES = ("exhaustive", "greedy")


@dataclass(frozen=True)
class Alarm:
    stop_time: int
    estimated_change_point: int
    estimated_subgraph: tuple[int, ...]
    statistic_at_stop: float
    estimated_p1: float | None = None


@dataclass(frozen=True)
class StreamEnded:
    """Returned instead of an :class:`Alarm` when the stream runs out first."""

    horizon: int
    censored: bool = True


# --------------------------------------------------------------------- CUSUM


@dataclass(frozen=True)
class CusumState:
    """CUSUM recursion state for a known changed subgraph.

    ``statistic`` is ``S_t``; it may be negative, the positive part is taken
    when the next observation arrives.  ``change_start`` is the first time of
    the current excursion, the usual CUSUM change-point estimate.
    """

    threshold: float
    target_subgraph: tuple[int, ...]
    weights: LlrWeights
    statistic: float = 0.0
    time: int = 0
    change_start: int = 1

    @classmethod
    def initial(cls, threshold: float, target_subgraph, p0, p1) -> CusumState:
        nodes = tuple(int(v) for v in sorted(target_subgraph))
        if len(nodes) < 2:
            raise ValueError("target subgraph needs at least two nodes")
        return cls(float(threshold), nodes, make_weights(p0, p1))


def cusum_step(state: CusumState, graph: GraphSnapshot) -> tuple[CusumState, bool]:
    nodes = state.target_subgraph
    e = edge_count_within(graph, nodes)
    increment = float(llr_from_count(e, comb(len(nodes), 2), state.weights))
    t = state.time + 1
    start = state.change_start if state.statistic > 0 else t
    s = max(state.statistic, 0.0) + increment
    new = replace(state, statistic=s, time=t, change_start=start)
    return new, s > state.threshold


def run_cusum(stream, threshold: float, target_subgraph, p0, p1) -> Alarm | StreamEnded:
    """First time the CUSUM statistic exceeds ``threshold``."""
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    state = CusumState.initial(threshold, target_subgraph, p0, p1)
    seen = 0
    for graph in stream:
        seen += 1
        state, alarm = cusum_step(state, graph)
        if alarm:
            return Alarm(state.time, state.change_start, state.target_subgraph, state.statistic)
    if not seen:
        raise ValueError("empty stream")
    return StreamEnded(state.time)


# ----------------------------------------------------------------------- GLR


@dataclass(frozen=True)
class GlrWindowConfig:
    min_lookback: int
    max_lookback: int
    threshold: float
    scan_mode: str = "exhaustive"
    p1_mode: str = "known"
    clamp: float | None = None
    candidate_cap: int = DEFAULT_CANDIDATE_CAP
    connected_only: bool = False

    def __post_init__(self):
        check_positive_int(self.min_lookback, "min_lookback")
        check_positive_int(self.max_lookback, "max_lookback")
        if self.min_lookback > self.max_lookback:
            raise ValueError(
                f"min_lookback ({self.min_lookback}) must not exceed max_lookback ({self.max_lookback})"
            )
        if self.scan_mode not in SCAN_MODES:
            raise ValueError(f"scan_mode must be one of {SCAN_MODES}, got {self.scan_mode!r}")
        if self.p1_mode not in ("known", "mle"):
            raise ValueError(f"p1_mode must be 'known' or 'mle', got {self.p1_mode!r}")
        if self.clamp is not None and not 0.0 < self.clamp < 0.5:
            raise ValueError(f"clamp must lie in (0, 0.5), got {self.clamp}")


@dataclass(frozen=True)
class GlrStep:
    statistic: float
    change_point: int | None
    subgraph: tuple[int, ...] | None
    alarm: bool
    p1_hat: float | None = None


def default_max_lookback(threshold: float, information: float) -> int:
    """Window ceil(4 b / I), comfortably above b / I."""
    return max(1, math.ceil(4.0 * threshold / information))


def admissible_starts(t: int, min_lookback: int, max_lookback: int) -> range:
    return range(max(1, t - max_lookback + 1), t - min_lookback + 2)


def _candidates_for(num_nodes: int, n: int, config: GlrWindowConfig) -> CandidateSet:
    if config.scan_mode == "greedy":
        return CandidateSet(num_nodes, n, "greedy")
    cands = enumerate_candidates(num_nodes, n, config.candidate_cap)
    if not cands.exhaustive:
        raise ValueError(
            f"exhaustive scan needs C({num_nodes}, {n}) = {comb(num_nodes, n)} candidates, "
            f"above the cap {config.candidate_cap}; use scan_mode='greedy'"
        )
    return cands


def glr_step(
    counts: EdgeCountMatrix,
    t: int,
    config: GlrWindowConfig,
    weights: LlrWeights,
    community_size: int,
    candidates: CandidateSet | None = None,
) -> GlrStep:
    """Window-limited GLR statistic at time ``t`` with known p1."""
    if candidates is None:
        candidates = _candidates_for(counts.num_nodes, community_size, config)
    best = (-math.inf, None, None)
    for k in admissible_starts(t, config.min_lookback, config.max_lookback):
        pw = WeightedPairGraph(counts.num_nodes, counts.window_counts(k, t))
        nodes, stat = best_subgraph(pw, candidates, weights, t - k + 1, connected_only=config.connected_only)
        if stat > best[0]:
            best = (stat, k, tuple(nodes))
    stat, k, nodes = best
    return GlrStep(stat, k, nodes, stat > config.threshold)


def _clamp_for(config_clamp: float | None, slots: int) -> float:
    return config_clamp if config_clamp is not None else 1.0 / (2.0 * slots)


def mle_p1(counts: EdgeCountMatrix, k: int, t: int, subgraph, clamp: float | None = None) -> float:
    """Sample edge rate inside ``subgraph`` over snapshots ``k..t``, clamped to [eps, 1-eps]."""
    pairs = subgraph_pairs(subgraph, counts.num_nodes)
    slots = (t - k + 1) * pairs.size
    edges = int(counts.window_counts(k, t)[pairs].sum())
    eps = _clamp_for(clamp, slots)
    return min(max(edges / slots, eps), 1.0 - eps)


def plugin_llr(edges, slots: int, p0: float, p1_hat):
    """Window LLR with the post-change rate replaced by ``p1_hat`` (arrays allowed)."""
    return edges * np.log(p1_hat / p0) + (slots - edges) * np.log((1.0 - p1_hat) / (1.0 - p0))


def glr_unknown_p1_step(
    counts: EdgeCountMatrix,
    t: int,
    config: GlrWindowConfig,
    p0: float,
    community_size: int,
    candidates: CandidateSet | None = None,
) -> GlrStep:
    """Window-limited GLR with p1 replaced by its per-window MLE."""
    p0 = check_probability(p0, "p0")
    if candidates is None:
        candidates = _candidates_for(counts.num_nodes, community_size, config)
    n_pairs = comb(community_size, 2)
    best = (-math.inf, None, None, None)
    for k in admissible_starts(t, config.min_lookback, config.max_lookback):
        slots = (t - k + 1) * n_pairs
        eps = _clamp_for(config.clamp, slots)
        window = counts.window_counts(k, t)
        if candidates.exhaustive:
            nodes_all = candidates.nodes
            edges = window[candidates.pair_index].sum(axis=1)
        else:
            pw = WeightedPairGraph(counts.num_nodes, window)
            dense = greedy_densest(pw, community_size)
            sparse = greedy_densest(WeightedPairGraph(counts.num_nodes, -window), community_size)
            nodes_all = np.array([dense, sparse])
            edges = np.array([subset_weight(pw, dense), subset_weight(pw, sparse)])
        p_hat = np.clip(edges / slots, eps, 1.0 - eps)
        stats = plugin_llr(edges, slots, p0, p_hat)
        i = int(np.argmax(stats))
        if stats[i] > best[0]:
            best = (float(stats[i]), k, tuple(nodes_all[i].tolist()), float(p_hat[i]))
    stat, k, nodes, p_hat = best
    return GlrStep(stat, k, nodes, stat > config.threshold, p_hat)


def localize(
    counts: EdgeCountMatrix,
    k: int,
    t: int,
    weights: LlrWeights,
    community_size: int,
    scan_mode: str = "exhaustive",
    candidate_cap: int = DEFAULT_CANDIDATE_CAP,
) -> tuple[list[int], float]:
    """Most likely changed subgraph for the window ``k..t`` and its statistic."""
    config = GlrWindowConfig(1, 1, 1.0, scan_mode=scan_mode, candidate_cap=candidate_cap)
    cands = _candidates_for(counts.num_nodes, community_size, config)
    pw = WeightedPairGraph(counts.num_nodes, counts.window_counts(k, t))
    return best_subgraph(pw, cands, weights, t - k + 1)


# ---------------------------------------------------------------- estimators


class _StreamDetector(BaseEstimator):
    """Shared fit / partial_fit / predict plumbing for the online detectors."""

    def fit(self, X, y=None):
        """Run the detector over the whole stream ``X`` from a fresh state."""
        num_nodes, bits = check_snapshots(X)
        self._reset(num_nodes)
        for row in bits:
            self._update(row)
        return self

    def partial_fit(self, X, y=None):
        """Feed further snapshots to an already running detector."""
        num_nodes, bits = check_snapshots(X)
        if not hasattr(self, "num_nodes_"):
            self._reset(num_nodes)
        elif num_nodes != self.num_nodes_:
            raise ValueError(f"stream has N={num_nodes}, detector was started with N={self.num_nodes_}")
        for row in bits:
            self._update(row)
        return self

    def decision_function(self, X) -> np.ndarray:
        """Statistic path for a fresh run over ``X`` (``-inf`` where undefined)."""
        fresh = self.__class__(**self.get_params()).fit(X)
        return np.asarray(fresh.statistics_)

    def predict(self, X) -> np.ndarray:
        """Per-step alarm indicator, ``statistic > threshold``."""
        return self.decision_function(X) > self.threshold

    def _check_fitted(self):
        if not hasattr(self, "num_nodes_"):
            raise NotFittedError(f"{type(self).__name__} has not seen any snapshots yet")

    @property
    def stop_time_(self) -> int | None:
        self._check_fitted()
        return None if self.alarm_ is None else self.alarm_.stop_time


class CusumDetector(_StreamDetector):
    """CUSUM for a known changed subgraph.

    Parameters
    ----------
    subgraph : sequence of int
        Nodes whose internal edge probability changes.
    p0, p1 : float
        Edge probability before / after the change.
    threshold : float
        Alarm when the statistic exceeds this value.

    Attributes
    ----------
    statistics_ : list of float
        ``S_t`` for every processed snapshot.
    change_starts_ : list of int
        Start of the current CUSUM excursion at each step.
    alarm_ : Alarm or None
        First threshold crossing.
    """

    def __init__(self, subgraph=(0, 1, 2, 3, 4), p0=0.2, p1=0.5, threshold=5.0):
        self.subgraph = subgraph
        self.p0 = p0
        self.p1 = p1
        self.threshold = threshold

    def _reset(self, num_nodes):
        check_subgraph(self.subgraph, num_nodes)
        self.num_nodes_ = num_nodes
        self.state_ = CusumState.initial(self.threshold, self.subgraph, self.p0, self.p1)
        self.statistics_ = []
        self.change_starts_ = []
        self.alarm_ = None

    def _update(self, row):
        self.state_, alarm = cusum_step(self.state_, GraphSnapshot(self.num_nodes_, row))
        self.statistics_.append(self.state_.statistic)
        self.change_starts_.append(self.state_.change_start)
        if alarm and self.alarm_ is None:
            s = self.state_
            self.alarm_ = Alarm(s.time, s.change_start, s.target_subgraph, s.statistic)
        return self.statistics_[-1]


class GlrScanDetector(_StreamDetector):
    """Window-limited GLR scan over all size-n subgraphs.

    Parameters
    ----------
    community_size : int
        Size n of the changed subgraph.
    p0 : float
        Pre-change edge probability.
    p1 : float or None
        Post-change edge probability inside the community; ``None`` estimates
        it per window by maximum likelihood.
    threshold : float
    min_lookback, max_lookback : int
        Window lengths considered at each step.  ``max_lookback=None`` picks
        ``ceil(4 * threshold / I)`` (known p1 only).
    scan_mode : {"exhaustive", "greedy"}
    clamp : float or None
        MLE clamp; ``None`` uses half a count, ``1 / (2 * slots)``.
    candidate_cap : int
        Largest C(N, n) allowed for an exhaustive scan.
    connected_only : bool
        Restrict exhaustive scans to candidates that are connected in the
        window's aggregated graph.
    """

    def __init__(
        self,
        community_size=5,
        p0=0.2,
        p1=0.5,
        threshold=10.0,
        min_lookback=1,
        max_lookback=None,
        scan_mode="exhaustive",
        clamp=None,
        candidate_cap=DEFAULT_CANDIDATE_CAP,
        connected_only=False,
    ):
        self.community_size = community_size
        self.p0 = p0
        self.p1 = p1
        self.threshold = threshold
        self.min_lookback = min_lookback
        self.max_lookback = max_lookback
        self.scan_mode = scan_mode
        self.clamp = clamp
        self.candidate_cap = candidate_cap
        self.connected_only = connected_only

    @property
    def p1_mode(self) -> str:
        return "mle" if self.p1 is None else "known"

    def window_config(self) -> GlrWindowConfig:
        m_hi = self.max_lookback
        if m_hi is None:
            if self.p1 is None:
                raise ValueError("max_lookback must be given when p1 is unknown")
            info = change_information(self.community_size, self.p0, self.p1)
            m_hi = max(default_max_lookback(self.threshold, info), self.min_lookback)
        return GlrWindowConfig(
            self.min_lookback,
            m_hi,
            float(self.threshold),
            scan_mode=self.scan_mode,
            p1_mode=self.p1_mode,
            clamp=self.clamp,
            candidate_cap=self.candidate_cap,
            connected_only=self.connected_only,
        )

    def llr_weights(self) -> LlrWeights:
        if self.p1 is None:
            raise ValueError("p1 is unknown in MLE mode")
        return make_weights(self.p0, self.p1)

    def _reset(self, num_nodes):
        n = check_positive_int(self.community_size, "community_size", minimum=2)
        if n >= num_nodes:
            raise ValueError(f"community_size must be < N, got n={n}, N={num_nodes}")
        self.config_ = self.window_config()
        self.weights_ = None if self.p1 is None else self.llr_weights()
        self.num_nodes_ = num_nodes
        self.candidates_ = _candidates_for(num_nodes, n, self.config_)
        self.counts_ = EdgeCountMatrix(num_nodes, max_lookback=self.config_.max_lookback)
        self.statistics_ = []
        self.change_points_ = []
        self.subgraphs_ = []
        self.p1_hats_ = []
        self.alarm_ = None
        self.alarm_counts_ = None

    def _update(self, row):
        self.counts_.append(row)
        t = self.counts_.horizon
        if self.p1 is None:
            step = glr_unknown_p1_step(
                self.counts_, t, self.config_, self.p0, self.community_size, self.candidates_
            )
        else:
            step = glr_step(self.counts_, t, self.config_, self.weights_, self.community_size, self.candidates_)
        self.statistics_.append(step.statistic)
        self.change_points_.append(step.change_point)
        self.subgraphs_.append(step.subgraph)
        self.p1_hats_.append(step.p1_hat)
        if step.alarm and self.alarm_ is None:
            self.alarm_ = Alarm(t, step.change_point, step.subgraph, step.statistic, step.p1_hat)
            # keep the alarm window answerable after the stream moves on
            self.alarm_counts_ = copy.deepcopy(self.counts_)
        return step

    def localize(self, k: int | None = None, t: int | None = None) -> tuple[list[int], float]:
        """Most likely changed subgraph over ``k..t`` (default: the alarm window)."""
        self._check_fitted()
        if t is None:
            t = self.alarm_.stop_time if self.alarm_ is not None else self.counts_.horizon
        if k is None:
            if self.alarm_ is not None:
                k = self.alarm_.estimated_change_point
            else:
                k = self.change_points_[t - 1]
                if k is None:
                    raise ValueError("no admissible window yet")
        counts = self.counts_
        if self.alarm_ is not None and t <= self.alarm_.stop_time:
            counts = self.alarm_counts_
        if self.weights_ is None:
            length = t - k + 1
            one_window = replace(self.config_, min_lookback=length, max_lookback=length)
            step = glr_unknown_p1_step(counts, t, one_window, self.p0, self.community_size, self.candidates_)
            return list(step.subgraph), step.statistic
        return localize(counts, k, t, self.weights_, self.community_size, self.scan_mode, self.candidate_cap)
