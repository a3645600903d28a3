"""Candidate subgraphs and densest-n-subgraph search over aggregated pair weights."""

from __future__ import annotations

import itertools
from collections.abc import Iterator
from dataclasses import dataclass, field
from math import comb

import numpy as np

from graphscan.likelihood import LlrWeights, llr_from_count
from graphscan.validation import num_pairs

__all__ = [
    "DEFAULT_CANDIDATE_CAP",
    "CandidateSet",
    "WeightedPairGraph",
    "best_subgraph",
    "brute_force_densest",
    "enumerate_candidates",
    "greedy_densest",
    "subset_weight",
]

DEFAULT_CANDIDATE_CAP = 200_000


@dataclass
class WeightedPairGraph:
    """Weights on the unordered pairs of ``num_nodes`` nodes, in canonical pair order."""

    num_nodes: int
    pair_weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.pair_weights)
        if w.shape != (num_pairs(self.num_nodes),):
            raise ValueError(f"expected {num_pairs(self.num_nodes)} pair weights, got shape {w.shape}")
        self.pair_weights = w

    @classmethod
    def from_matrix(cls, matrix) -> WeightedPairGraph:
        a = np.asarray(matrix)
        iu, ju = np.triu_indices(a.shape[0], k=1)
        return cls(a.shape[0], a[iu, ju])

    def matrix(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes), dtype=self.pair_weights.dtype)
        iu, ju = np.triu_indices(self.num_nodes, k=1)
        a[iu, ju] = self.pair_weights
        return a + a.T


def _pair_positions(candidates: np.ndarray, num_nodes: int) -> np.ndarray:
    a, b = np.triu_indices(candidates.shape[1], k=1)
    i, j = candidates[:, a], candidates[:, b]
    return i * (2 * num_nodes - i - 1) // 2 + (j - i - 1)


@dataclass
class CandidateSet:
    """All size-n subsets of the nodes (exhaustive mode) or a marker for greedy search.

    Iterating yields the candidates in lexicographic order without building
    the full list; ``pair_index`` materialises an array of shape
    (C(N, n), C(n, 2)) for vectorised scoring.
    """

    num_nodes: int
    community_size: int
    mode: str
    _pairs: np.ndarray | None = field(default=None, repr=False)
    _nodes: np.ndarray | None = field(default=None, repr=False)

    @property
    def exhaustive(self) -> bool:
        return self.mode == "exhaustive"

    def __len__(self) -> int:
        if not self.exhaustive:
            raise TypeError("greedy-only candidate sets have no materialised list")
        return comb(self.num_nodes, self.community_size)

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        if not self.exhaustive:
            raise TypeError("greedy-only candidate sets cannot be enumerated")
        return itertools.combinations(range(self.num_nodes), self.community_size)

    @property
    def nodes(self) -> np.ndarray:
        if self._nodes is None:
            flat = np.fromiter(
                itertools.chain.from_iterable(self),
                dtype=np.int64,
                count=len(self) * self.community_size,
            )
            self._nodes = flat.reshape(-1, self.community_size)
        return self._nodes

    @property
    def pair_index(self) -> np.ndarray:
        if self._pairs is None:
            self._pairs = _pair_positions(self.nodes, self.num_nodes)
        return self._pairs


def enumerate_candidates(num_nodes: int, community_size: int, cap: int = DEFAULT_CANDIDATE_CAP) -> CandidateSet:
    if not 2 <= community_size < num_nodes:
        raise ValueError(f"need 2 <= n < N, got n={community_size}, N={num_nodes}")
    mode = "exhaustive" if comb(num_nodes, community_size) <= cap else "greedy"
    return CandidateSet(num_nodes, community_size, mode)


def subset_weight(weights: WeightedPairGraph, subgraph) -> float:
    """Total weight of the pairs inside ``subgraph``."""
    nodes = np.sort(np.asarray(list(subgraph), dtype=np.int64))
    pos = _pair_positions(nodes[None, :], weights.num_nodes)[0]
    return weights.pair_weights[pos].sum()


def _top(scores: np.ndarray, count: int, allowed: np.ndarray) -> np.ndarray:
    # highest score first, ties to the lower index
    idx = np.flatnonzero(allowed)
    order = np.argsort(-scores[idx], kind="stable")
    return idx[order[:count]]


def greedy_densest(weights: WeightedPairGraph, n: int) -> list[int]:
    """Two-phase greedy densest-n-subgraph on weighted pairs.

    Takes the ceil(n/2) nodes of largest weighted degree, then the floor(n/2)
    remaining nodes with the largest total weight into that first group.
    Ties go to the smaller node index.
    """
    N = weights.num_nodes
    if not 1 <= n <= N:
        raise ValueError(f"need 1 <= n <= N, got n={n}, N={N}")
    a = weights.matrix().astype(np.float64)
    degree = a.sum(axis=1)
    everyone = np.ones(N, dtype=bool)
    head = _top(degree, (n + 1) // 2, everyone)
    rest = everyone.copy()
    rest[head] = False
    into_head = a[:, head].sum(axis=1)
    tail = _top(into_head, n // 2, rest)
    return sorted(np.concatenate([head, tail]).tolist())


def brute_force_densest(weights: WeightedPairGraph, n: int, cap: int = DEFAULT_CANDIDATE_CAP) -> list[int]:
    """Exact maximiser of the internal weight; ties broken lexicographically."""
    cands = enumerate_candidates(weights.num_nodes, n, cap)
    if not cands.exhaustive:
        raise ValueError(
            f"C({weights.num_nodes}, {n}) = {comb(weights.num_nodes, n)} exceeds the enumeration cap {cap}"
        )
    totals = weights.pair_weights[cands.pair_index].sum(axis=1)
    return cands.nodes[int(np.argmax(totals))].tolist()


def _connected_mask(cands: CandidateSet, positive: np.ndarray) -> np.ndarray:
    """Which candidates induce a connected graph on the positive-weight pairs."""
    n = cands.community_size
    a, b = np.triu_indices(n, k=1)
    present = positive[cands.pair_index]
    adj = np.zeros((present.shape[0], n, n), dtype=bool)
    adj[:, a, b] = present
    adj[:, b, a] = present
    reach = np.zeros((present.shape[0], n), dtype=bool)
    reach[:, 0] = True
    for _ in range(n - 1):
        reach = reach | np.any(adj & reach[:, :, None], axis=1)
    return reach.all(axis=1)


def best_subgraph(
    weights: WeightedPairGraph,
    candidates: CandidateSet,
    llr_weights: LlrWeights,
    window_len: int,
    *,
    connected_only: bool = False,
) -> tuple[list[int], float]:
    """Maximum-likelihood changed subgraph for a window and its log-likelihood ratio.

    ``weights`` holds the window's per-pair edge counts.  The statistic of a
    candidate V is ``w_present * W(V) + w_absent * (window_len * C(n,2) - W(V))``.
    Greedy-only candidate sets fall back to :func:`greedy_densest`, run on the
    negated counts when p1 < p0.
    """
    if window_len < 1:
        raise ValueError(f"window_len must be >= 1, got {window_len}")
    n = candidates.community_size
    slots = window_len * comb(n, 2)
    if candidates.exhaustive:
        totals = weights.pair_weights[candidates.pair_index].sum(axis=1)
        stats = llr_from_count(totals, slots, llr_weights)
        if connected_only:
            keep = _connected_mask(candidates, weights.pair_weights > 0)
            if not keep.any():
                raise ValueError("no candidate induces a connected subgraph in this window")
            stats = np.where(keep, stats, -np.inf)
        best = int(np.argmax(stats))
        return candidates.nodes[best].tolist(), float(stats[best])
    search = weights
    if llr_weights.contrast < 0:
        search = WeightedPairGraph(weights.num_nodes, -weights.pair_weights)
    nodes = greedy_densest(search, n)
    total = int(subset_weight(weights, nodes))
    return nodes, float(llr_from_count(total, slots, llr_weights))
