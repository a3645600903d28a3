"""Erdős–Rényi snapshots, planted-community change scenarios and the snapshot file format.

Every unordered pair ``{i, j}`` with ``i < j`` has a canonical position in
row-major order, ``(0,1), (0,2), ..., (0,N-1), (1,2), ...``.  Snapshots store
one indicator per pair in that order and samplers draw exactly one uniform per
pair in that order, so a seed fixes the whole sequence.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from graphscan.validation import check_positive_int, check_probability, check_subgraph, num_pairs

__all__ = [
    "ChangeScenario",
    "ErParams",
    "GraphSnapshot",
    "SnapshotFormatError",
    "edge_count_within",
    "make_rng",
    "pair_index",
    "pair_probabilities",
    "read_snapshots",
    "sample_er",
    "sample_sequence",
    "subgraph_pairs",
    "write_snapshots",
]

INFINITE_CHANGE = math.inf


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; ``seed`` may be an int or a :class:`numpy.random.SeedSequence`."""
    return np.random.Generator(np.random.PCG64(seed))


def pair_index(i: int, j: int, num_nodes: int) -> int:
    """Canonical position of the unordered pair ``{i, j}``."""
    if i == j:
        raise ValueError("self-loops are not allowed")
    if i > j:
        i, j = j, i
    if i < 0 or j >= num_nodes:
        raise ValueError(f"pair ({i}, {j}) out of range for N={num_nodes}")
    return i * (2 * num_nodes - i - 1) // 2 + (j - i - 1)


def subgraph_pairs(subgraph: Iterable[int], num_nodes: int) -> np.ndarray:
    """Canonical positions of all pairs with both endpoints in ``subgraph``."""
    nodes = check_subgraph(subgraph, num_nodes)
    a, b = np.triu_indices(nodes.size, k=1)
    i, j = nodes[a], nodes[b]
    return i * (2 * num_nodes - i - 1) // 2 + (j - i - 1)


@dataclass(frozen=True)
class ErParams:
    """Edge probability of an Erdős–Rényi model, restricted to (0, 1)."""

    p: float

    def __post_init__(self):
        object.__setattr__(self, "p", check_probability(self.p, "p"))


def _as_prob(p) -> float:
    return p.p if isinstance(p, ErParams) else check_probability(p, "p")


@dataclass(frozen=True, eq=False)
class GraphSnapshot:
    """Undirected simple graph on ``num_nodes`` labelled nodes.

    ``bits`` holds one boolean per unordered pair in canonical order.
    """

    num_nodes: int
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        check_positive_int(self.num_nodes, "num_nodes", minimum=2)
        bits = np.ascontiguousarray(self.bits, dtype=bool)
        if bits.shape != (num_pairs(self.num_nodes),):
            raise ValueError(
                f"expected {num_pairs(self.num_nodes)} pair indicators, got shape {bits.shape}"
            )
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_edges(cls, num_nodes: int, edges: Iterable[tuple[int, int]]) -> GraphSnapshot:
        bits = np.zeros(num_pairs(num_nodes), dtype=bool)
        for i, j in edges:
            bits[pair_index(i, j, num_nodes)] = True
        return cls(num_nodes, bits)

    @classmethod
    def from_adjacency(cls, adjacency) -> GraphSnapshot:
        adj = np.asarray(adjacency)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError("adjacency must be a square matrix")
        if not np.array_equal(adj, adj.T) or np.any(np.diag(adj)):
            raise ValueError("adjacency must be symmetric with a zero diagonal")
        iu, ju = np.triu_indices(adj.shape[0], k=1)
        return cls(adj.shape[0], adj[iu, ju] != 0)

    @property
    def edges(self) -> list[tuple[int, int]]:
        iu, ju = np.triu_indices(self.num_nodes, k=1)
        mask = self.bits
        return list(zip(iu[mask].tolist(), ju[mask].tolist()))

    @property
    def num_edges(self) -> int:
        return int(np.count_nonzero(self.bits))

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.bits[pair_index(i, j, self.num_nodes)])

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.num_nodes, self.num_nodes), dtype=np.uint8)
        iu, ju = np.triu_indices(self.num_nodes, k=1)
        adj[iu, ju] = self.bits
        return adj | adj.T

    def __eq__(self, other):
        if not isinstance(other, GraphSnapshot):
            return NotImplemented
        return self.num_nodes == other.num_nodes and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.num_nodes, self.bits.tobytes()))


@dataclass(frozen=True)
class ChangeScenario:
    """Planted-community change: pairs inside ``planted_subgraph`` switch from p0 to p1 at ``change_point``.

    ``change_point = math.inf`` is the no-change regime.
    """

    num_nodes: int
    community_size: int
    planted_subgraph: tuple[int, ...]
    p0: float
    p1: float
    change_point: float = INFINITE_CHANGE

    def __post_init__(self):
        check_positive_int(self.num_nodes, "num_nodes", minimum=3)
        check_positive_int(self.community_size, "community_size", minimum=2)
        if self.community_size >= self.num_nodes:
            raise ValueError(
                f"community_size must be < num_nodes, got n={self.community_size}, N={self.num_nodes}"
            )
        nodes = check_subgraph(self.planted_subgraph, self.num_nodes)
        if nodes.size != self.community_size:
            raise ValueError(
                f"planted_subgraph has {nodes.size} nodes, expected {self.community_size}"
            )
        object.__setattr__(self, "planted_subgraph", tuple(nodes.tolist()))
        object.__setattr__(self, "p0", _as_prob(self.p0))
        object.__setattr__(self, "p1", _as_prob(self.p1))
        tau = self.change_point
        if tau != INFINITE_CHANGE:
            if isinstance(tau, float) and not tau.is_integer():
                raise ValueError(f"change_point must be a positive integer or inf, got {tau}")
            tau = int(tau)
            if tau < 1:
                raise ValueError(f"change_point must be >= 1, got {tau}")
            if self.p0 == self.p1:
                raise ValueError("p0 and p1 must differ when a change occurs")
            object.__setattr__(self, "change_point", tau)

    @classmethod
    def null(cls, num_nodes: int, community_size: int, p0: float, p1: float) -> ChangeScenario:
        """No-change scenario; the planted subgraph is a placeholder."""
        return cls(num_nodes, community_size, tuple(range(community_size)), p0, p1)

    def with_change_point(self, change_point) -> ChangeScenario:
        return ChangeScenario(
            self.num_nodes, self.community_size, self.planted_subgraph, self.p0, self.p1, change_point
        )


def pair_probabilities(scenario: ChangeScenario) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair edge probabilities before and after the change."""
    m = num_pairs(scenario.num_nodes)
    before = np.full(m, scenario.p0)
    after = before.copy()
    after[subgraph_pairs(scenario.planted_subgraph, scenario.num_nodes)] = scenario.p1
    return before, after


def sample_er(num_nodes: int, params, rng: np.random.Generator) -> GraphSnapshot:
    """One ER(N, p) snapshot; consumes exactly N(N-1)/2 uniforms in canonical order."""
    if num_nodes < 2:
        raise ValueError(f"num_nodes must be >= 2, got {num_nodes}")
    p = _as_prob(params)
    return GraphSnapshot(num_nodes, rng.random(num_pairs(num_nodes)) < p)


def sample_bits(scenario: ChangeScenario, start: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Pair indicators for times ``start .. start+count-1`` as a (count, M) bool array.

    Drawing a block consumes the generator exactly as ``count`` successive
    single-snapshot draws would.
    """
    before, after = pair_probabilities(scenario)
    u = rng.random((count, before.size))
    times = np.arange(start, start + count)
    probs = np.where((times >= scenario.change_point)[:, None], after, before)
    return u < probs


def sample_sequence(scenario: ChangeScenario, horizon: int, rng: np.random.Generator) -> list[GraphSnapshot]:
    """Snapshots G(1), ..., G(horizon) drawn under ``scenario``."""
    check_positive_int(horizon, "horizon")
    bits = sample_bits(scenario, 1, horizon, rng)
    return [GraphSnapshot(scenario.num_nodes, row) for row in bits]


def edge_count_within(graph: GraphSnapshot, subgraph: Iterable[int]) -> int:
    """Number of edges of ``graph`` with both endpoints in ``subgraph``."""
    return int(np.count_nonzero(graph.bits[subgraph_pairs(subgraph, graph.num_nodes)]))


class SnapshotFormatError(ValueError):
    """Malformed snapshot stream; ``lineno`` is 1-based."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def write_snapshots(snapshots: Sequence[GraphSnapshot], stream: IO[str], start: int = 1) -> None:
    """Write blocks ``t N`` / ``i j`` lines / blank line, one per snapshot."""
    for t, g in enumerate(snapshots, start=start):
        stream.write(f"{t} {g.num_nodes}\n")
        for i, j in g.edges:
            stream.write(f"{i} {j}\n")
        stream.write("\n")


def iter_snapshots(stream: IO[str]) -> Iterator[tuple[int, GraphSnapshot]]:
    """Parse the block format lazily, yielding ``(t, snapshot)``.

    Blocks must start at t=1, increase by one and agree on N.
    """
    expected_t = 1
    num_nodes = None
    header = None
    edges: list[tuple[int, int]] = []
    lineno = 0

    def finish():
        return expected_t, GraphSnapshot.from_edges(num_nodes, edges)

    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if header is None:
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise SnapshotFormatError(lineno, f"expected header 't N', got {line!r}")
            try:
                t, n = int(parts[0]), int(parts[1])
            except ValueError:
                raise SnapshotFormatError(lineno, f"non-integer header {line!r}") from None
            if t != expected_t:
                raise SnapshotFormatError(lineno, f"expected block t={expected_t}, got t={t}")
            if n < 2:
                raise SnapshotFormatError(lineno, f"N must be >= 2, got {n}")
            if num_nodes is not None and n != num_nodes:
                raise SnapshotFormatError(lineno, f"N changed from {num_nodes} to {n}")
            num_nodes = n
            header = lineno
            edges = []
            seen = set()
            continue
        if not line:
            yield finish()
            expected_t += 1
            header = None
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SnapshotFormatError(lineno, f"expected edge 'i j', got {line!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise SnapshotFormatError(lineno, f"non-integer edge {line!r}") from None
        if i < 0 or j >= num_nodes:
            raise SnapshotFormatError(lineno, f"edge ({i}, {j}) has an index outside [0, {num_nodes})")
        if i >= j:
            raise SnapshotFormatError(lineno, f"edge ({i}, {j}) must satisfy i < j")
        if (i, j) in seen:
            raise SnapshotFormatError(lineno, f"duplicate edge ({i}, {j})")
        seen.add((i, j))
        edges.append((i, j))
    if header is not None:
        # tolerate a missing final blank line
        yield finish()


def read_snapshots(stream: IO[str]) -> list[GraphSnapshot]:
    return [g for _, g in iter_snapshots(stream)]
