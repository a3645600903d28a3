"""Input validation helpers shared by the estimators and the functional API."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence

import numpy as np


def check_probability(p, name: str = "p", *, closed: bool = False) -> float:
    """Return ``p`` as a float, checking it lies in (0, 1).

    With ``closed=True`` the endpoints 0 and 1 are accepted too.
    """
    try:
        value = float(p)
    except (TypeError, ValueError):
        raise TypeError(f"{name} must be a real number, got {p!r}") from None
    if math.isnan(value):
        raise ValueError(f"{name} must not be NaN")
    if closed:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {value}")
    elif not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in the open interval (0, 1), got {value}")
    return value


def check_positive_int(value, name: str, *, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_subgraph(subgraph: Iterable[int], num_nodes: int) -> np.ndarray:
    """Validate a node-index list and return it as a sorted int64 array."""
    nodes = np.asarray(list(subgraph), dtype=np.int64)
    if nodes.ndim != 1:
        raise ValueError("subgraph must be a flat list of node indices")
    if nodes.size and (nodes.min() < 0 or nodes.max() >= num_nodes):
        raise ValueError(f"subgraph indices must lie in [0, {num_nodes}), got {nodes.tolist()}")
    nodes = np.sort(nodes)
    if nodes.size > 1 and np.any(nodes[1:] == nodes[:-1]):
        raise ValueError(f"subgraph contains duplicate indices: {nodes.tolist()}")
    return nodes


def num_pairs(num_nodes: int) -> int:
    return num_nodes * (num_nodes - 1) // 2


def nodes_from_pairs(m: int) -> int:
    """Invert ``num_pairs``; raises if ``m`` is not a triangular number."""
    n = int((1 + math.isqrt(1 + 8 * m)) // 2)
    if num_pairs(n) != m or n < 2:
        raise ValueError(f"{m} is not the pair count of any graph with N >= 2")
    return n


def check_snapshots(X) -> tuple[int, np.ndarray]:
    """Coerce a graph stream into ``(N, bits)`` with ``bits`` of shape (T, N(N-1)/2).

    Accepted inputs:

    * a sequence of :class:`~graphscan.graph_model.GraphSnapshot`;
    * an array of shape (T, N, N) holding symmetric 0/1 adjacency matrices;
    * an array of shape (T, N(N-1)/2) of pair indicators in canonical order.
    """
    from graphscan.graph_model import GraphSnapshot

    if isinstance(X, GraphSnapshot):
        X = [X]
    if isinstance(X, Sequence) and len(X) and isinstance(X[0], GraphSnapshot):
        sizes = {g.num_nodes for g in X}
        if len(sizes) != 1:
            raise ValueError(f"snapshots disagree on the node count: {sorted(sizes)}")
        return sizes.pop(), np.stack([g.bits for g in X])

    arr = np.asarray(X)
    if arr.size == 0:
        raise ValueError("empty graph stream")
    if arr.ndim == 3:
        T, n1, n2 = arr.shape
        if n1 != n2:
            raise ValueError(f"adjacency matrices must be square, got {n1}x{n2}")
        if not np.array_equal(arr, arr.transpose(0, 2, 1)):
            raise ValueError("adjacency matrices must be symmetric (undirected graphs)")
        if np.any(np.diagonal(arr, axis1=1, axis2=2)):
            raise ValueError("adjacency matrices must have a zero diagonal (no self-loops)")
        iu, ju = np.triu_indices(n1, k=1)
        bits = arr[:, iu, ju]
        num_nodes = n1
    elif arr.ndim == 2:
        bits = arr
        num_nodes = nodes_from_pairs(arr.shape[1])
    else:
        raise ValueError(f"expected a 2-D or 3-D array, got shape {arr.shape}")
    if not np.all((bits == 0) | (bits == 1)):
        raise ValueError("edge indicators must be 0 or 1")
    return num_nodes, np.ascontiguousarray(bits, dtype=bool)
