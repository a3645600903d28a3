"""Log-likelihood ratios for the planted-community change and their windowed sums.

All logarithms are natural, so statistics and thresholds are in nats.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from math import comb

import numpy as np

from graphscan.graph_model import ErParams, GraphSnapshot, edge_count_within, subgraph_pairs
from graphscan.validation import check_probability, num_pairs

__all__ = [
    "DegenerateContrastError",
    "EdgeCountMatrix",
    "LlrWeights",
    "bernoulli_kl",
    "change_information",
    "make_weights",
    "null_drift",
    "snapshot_llr",
    "window_llr",
]

_MAX_WINDOW = 2**31 - 1


class DegenerateContrastError(ValueError):
    """Raised when p0 == p1, which makes every log-likelihood ratio zero."""


def _p(x) -> float:
    return x.p if isinstance(x, ErParams) else check_probability(x, "p")


@dataclass(frozen=True)
class LlrWeights:
    """Per-pair log-likelihood-ratio contributions for a present / absent edge."""

    w_present: float
    w_absent: float
    p0: float
    p1: float

    @property
    def contrast(self) -> float:
        """Increase in LLR per additional present edge."""
        return self.w_present - self.w_absent


def make_weights(p0, p1) -> LlrWeights:
    p0, p1 = _p(p0), _p(p1)
    if p0 == p1:
        raise DegenerateContrastError(f"degenerate contrast: p0 == p1 == {p0}")
    return LlrWeights(math.log(p1 / p0), math.log((1.0 - p1) / (1.0 - p0)), p0, p1)


def llr_from_count(edges: int | np.ndarray, slots: int | np.ndarray, weights: LlrWeights):
    """LLR of ``slots`` pair-time observations of which ``edges`` were present."""
    return weights.w_present * edges + weights.w_absent * (slots - edges)


def snapshot_llr(graph: GraphSnapshot, subgraph, weights: LlrWeights) -> float:
    """Log-likelihood ratio of one snapshot restricted to the pairs inside ``subgraph``."""
    nodes = list(subgraph)
    e = edge_count_within(graph, nodes)
    return float(llr_from_count(e, comb(len(nodes), 2), weights))


def bernoulli_kl(q: float, p: float) -> float:
    """KL divergence KL(Bern(q) || Bern(p)) in nats, with 0 log 0 = 0."""
    q = check_probability(q, "q", closed=True)
    p = check_probability(p, "p")
    out = 0.0
    if q > 0.0:
        out += q * math.log(q / p)
    if q < 1.0:
        out += (1.0 - q) * math.log((1.0 - q) / (1.0 - p))
    return max(out, 0.0)


def change_information(n: int, p0, p1) -> float:
    """KL information per post-change snapshot: C(n, 2) * KL(p1 || p0)."""
    p0, p1 = _p(p0), _p(p1)
    if n < 2:
        raise ValueError(f"community size must be >= 2, got {n}")
    if p0 == p1:
        raise DegenerateContrastError(f"degenerate contrast: p0 == p1 == {p0}")
    return comb(n, 2) * bernoulli_kl(p1, p0)


def null_drift(n: int, p0, p1) -> float:
    """Expected snapshot LLR under the no-change model, -C(n, 2) * KL(p0 || p1)."""
    w = make_weights(p0, p1)
    if n < 2:
        raise ValueError(f"community size must be >= 2, got {n}")
    return comb(n, 2) * (w.p0 * w.w_present + (1.0 - w.p0) * w.w_absent)


class EdgeCountMatrix:
    """Cumulative per-pair edge counts ``C_t(i, j) = sum_{m <= t} G_ij(m)``.

    With ``max_lookback`` set, only the prefix rows needed for windows of at
    most that many snapshots are retained.
    """

    def __init__(self, num_nodes: int, max_lookback: int | None = None):
        if num_nodes < 2:
            raise ValueError(f"num_nodes must be >= 2, got {num_nodes}")
        if max_lookback is not None and not 1 <= max_lookback <= _MAX_WINDOW:
            raise ValueError(f"max_lookback must lie in [1, 2**31 - 1], got {max_lookback}")
        self.num_nodes = num_nodes
        self.max_lookback = max_lookback
        self.horizon = 0
        zero = np.zeros(num_pairs(num_nodes), dtype=np.int32)
        # _rows[-1] is C_horizon; _rows[0] is C_{_first}
        self._rows: deque[np.ndarray] = deque([zero], maxlen=None if max_lookback is None else max_lookback + 1)
        self._first = 0

    @classmethod
    def from_bits(cls, bits: np.ndarray, max_lookback: int | None = None) -> EdgeCountMatrix:
        from graphscan.validation import check_snapshots

        num_nodes, bits = check_snapshots(bits)
        counts = cls(num_nodes, max_lookback)
        for row in bits:
            counts.append(row)
        return counts

    @classmethod
    def from_snapshots(cls, snapshots, max_lookback: int | None = None) -> EdgeCountMatrix:
        return cls.from_bits(snapshots, max_lookback)

    def append(self, snapshot) -> None:
        bits = snapshot.bits if isinstance(snapshot, GraphSnapshot) else np.asarray(snapshot, dtype=bool)
        if bits.shape != self._rows[-1].shape:
            raise ValueError(f"snapshot has {bits.shape} pair indicators, expected {self._rows[-1].shape}")
        if self.horizon >= _MAX_WINDOW:
            raise OverflowError("edge counts would overflow 32-bit counters")
        self._rows.append(self._rows[-1] + bits)
        self.horizon += 1
        self._first = self.horizon + 1 - len(self._rows)

    @property
    def earliest_start(self) -> int:
        """Smallest window start ``k`` still answerable."""
        return self._first + 1

    def prefix(self, t: int) -> np.ndarray:
        """Counts ``C_t`` for a retained ``t`` (``C_0`` is all zeros)."""
        if not self._first <= t <= self.horizon:
            raise IndexError(f"prefix C_{t} not retained (have {self._first}..{self.horizon})")
        return self._rows[t - self._first]

    def window_counts(self, k: int, t: int) -> np.ndarray:
        """Per-pair edge counts over snapshots ``k .. t`` inclusive."""
        if k > t:
            raise ValueError(f"window start k={k} exceeds end t={t}")
        if k < 1 or t > self.horizon:
            raise IndexError(f"window [{k}, {t}] outside observed range [1, {self.horizon}]")
        if t - k + 1 > _MAX_WINDOW:
            raise ValueError("window longer than 2**31 - 1 snapshots")
        return self.prefix(t) - self.prefix(k - 1)


def window_llr(counts: EdgeCountMatrix, k: int, t: int, subgraph, weights: LlrWeights) -> float:
    """Sum of snapshot LLRs over times ``k .. t`` for ``subgraph``, from prefix counts."""
    pairs = subgraph_pairs(subgraph, counts.num_nodes)
    w = counts.window_counts(k, t)
    edges = int(w[pairs].sum())
    return float(llr_from_count(edges, (t - k + 1) * pairs.size, weights))
