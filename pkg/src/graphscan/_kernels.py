"""Compiled run-length kernels used by the Monte Carlo harness.

Each kernel consumes a block of snapshots (rows of pair indicators) for one
path and appends *records*: the times at which the running maximum of the
detector statistic strictly increases, with the new maximum.  The stopping
time for any threshold b is the first record time whose value exceeds b, so a
single pass serves every threshold up to ``level_cap``.

The arithmetic mirrors ``likelihood.llr_from_count`` term by term so that
statistics agree bit-for-bit with the reference detectors.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# slack when pruning candidates with the CUSUM upper bound
_BOUND_SLACK = 1e-9


@njit(cache=True)
def cusum_block(bits, pairs, w_p, w_a, state, level_cap, rec_t, rec_v, stats_out):
    """state = [S, t, record]; returns (steps consumed, records written, stopped)."""
    n_pairs = pairs.shape[0]
    s, t, record = state[0], int(state[1]), state[2]
    n_rec = 0
    for row in range(bits.shape[0]):
        t += 1
        e = 0
        for c in range(n_pairs):
            e += bits[row, pairs[c]]
        inc = w_p * e + w_a * (n_pairs - e)
        s = max(s, 0.0) + inc
        if stats_out.shape[0] > 0:
            stats_out[row] = s
        if s > record:
            record = s
            rec_t[n_rec] = t
            rec_v[n_rec] = s
            n_rec += 1
            if record > level_cap:
                state[0], state[1], state[2] = s, t, record
                return row + 1, n_rec, True
    state[0], state[1], state[2] = s, t, record
    return bits.shape[0], n_rec, False


@njit(cache=True)
def _pair_endpoints(num_nodes):
    m = num_nodes * (num_nodes - 1) // 2
    pi = np.empty(m, np.int64)
    pj = np.empty(m, np.int64)
    p = 0
    for i in range(num_nodes):
        for j in range(i + 1, num_nodes):
            pi[p] = i
            pj[p] = j
            p += 1
    return pi, pj


@njit(cache=True)
def _scan_subsets(adj, n, counts, ring_row, bound, w_p, w_a, update):
    """Edges inside every n-subset, in lexicographic subset order.

    ``adj`` is upper triangular.  The first n-2 members are enumerated with
    partial sums (acc[l, f] = edges from the first l chosen nodes to f); the
    last two members are explicit loops.  With ``update`` the count of subset
    v goes to ring_row[v] and bound[v] takes one CUSUM step, and the largest
    bound is returned; otherwise counts go to ``counts``.
    """
    num_nodes = adj.shape[0]
    n_pairs = n * (n - 1) // 2
    depth = n - 2
    acc = np.zeros((depth + 1, num_nodes), np.int64)
    inside = np.zeros(depth + 1, np.int64)
    cur = np.zeros(depth + 1, np.int64)
    idx = 0
    top = -np.inf
    level = 0
    while level >= 0:
        if level == depth:
            base = inside[level]
            row = acc[level]
            for c in range(cur[level], num_nodes - 1):
                e_c = base + row[c]
                for f in range(c + 1, num_nodes):
                    e = e_c + row[f] + adj[c, f]
                    if update:
                        ring_row[idx] = e
                        b = max(bound[idx], 0.0) + (w_p * e + w_a * (n_pairs - e))
                        bound[idx] = b
                        if b > top:
                            top = b
                    else:
                        counts[idx] = e
                    idx += 1
            level -= 1
            if level >= 0:
                cur[level] += 1
            continue
        v = cur[level]
        if v > num_nodes - (n - level):
            level -= 1
            if level >= 0:
                cur[level] += 1
            continue
        inside[level + 1] = inside[level] + acc[level, v]
        for f in range(v + 1, num_nodes):
            acc[level + 1, f] = acc[level, f] + adj[v, f]
        cur[level + 1] = v + 1
        level += 1
    return top


@njit(cache=True)
def subset_edge_counts(adj, n, out):
    """Edge count inside every n-subset (lexicographic order) into ``out``."""
    _scan_subsets(adj, n, out, out[:0].astype(np.uint8), np.empty(0), 0.0, 0.0, False)


@njit(cache=True)
def exhaustive_block(
    bits, num_nodes, n, w_p, w_a, m_lo, m_hi, ring, bound, state, level_cap, rec_t, rec_v, stats_out
):
    """Exhaustive window-limited GLR over all n-subsets.

    ring[slot, v] holds the in-subset edge count of candidate v at the time
    with slot = time mod m_hi.  bound[v] is the unrestricted CUSUM of
    candidate v, an upper bound on its windowed statistic.  state = [t, record].
    Writing stats_out disables pruning and records the exact statistic per row.
    """
    d = bound.shape[0]
    n_pairs = n * (n - 1) // 2
    size = ring.shape[0]
    pi, pj = _pair_endpoints(num_nodes)
    adj = np.zeros((num_nodes, num_nodes), np.int64)
    no_counts = np.empty(0, np.int64)
    t, record = int(state[0]), state[1]
    full = stats_out.shape[0] > 0
    n_rec = 0
    for row in range(bits.shape[0]):
        t += 1
        cur = t % size
        for q in range(pi.shape[0]):
            adj[pi[q], pj[q]] = bits[row, q]
        top = _scan_subsets(adj, n, no_counts, ring[cur], bound, w_p, w_a, True)
        if t < m_lo:
            if full:
                stats_out[row] = -np.inf
            continue
        l_hi = min(m_hi, t)
        floor = -np.inf if full else record - _BOUND_SLACK
        if top <= floor:
            continue
        stat = -np.inf
        for v in range(d):
            if bound[v] <= floor:
                continue
            w = 0
            for length in range(1, l_hi + 1):
                w += ring[(t - length + 1) % size, v]
                if length >= m_lo:
                    r = w_p * w + w_a * (length * n_pairs - w)
                    if r > stat:
                        stat = r
        if full:
            stats_out[row] = stat
        if stat > record:
            record = stat
            rec_t[n_rec] = t
            rec_v[n_rec] = stat
            n_rec += 1
            if record > level_cap:
                state[0], state[1] = t, record
                return row + 1, n_rec, True
    state[0], state[1] = t, record
    return bits.shape[0], n_rec, False


@njit(cache=True)
def _greedy_window(window, sign, pi, pj, num_nodes, n, deg, into, chosen, members):
    # degrees on the (possibly negated) window counts
    for v in range(num_nodes):
        deg[v] = 0.0
        into[v] = 0.0
        chosen[v] = False
    for p in range(window.shape[0]):
        w = sign * window[p]
        deg[pi[p]] += w
        deg[pj[p]] += w
    head = (n + 1) // 2
    for h in range(head):
        best = -1
        for v in range(num_nodes):
            if not chosen[v] and (best < 0 or deg[v] > deg[best]):
                best = v
        chosen[best] = True
        members[h] = best
    for v in range(num_nodes):
        acc = 0.0
        for h in range(head):
            u = members[h]
            if u != v:
                i, j = (v, u) if v < u else (u, v)
                acc += sign * window[i * (2 * num_nodes - i - 1) // 2 + (j - i - 1)]
        into[v] = acc
    for h in range(head, n):
        best = -1
        for v in range(num_nodes):
            if not chosen[v] and (best < 0 or into[v] > into[best]):
                best = v
        chosen[best] = True
        members[h] = best
    total = 0
    for a in range(n):
        for b in range(a + 1, n):
            i, j = members[a], members[b]
            if i > j:
                i, j = j, i
            total += window[i * (2 * num_nodes - i - 1) // 2 + (j - i - 1)]
    return total


@njit(cache=True)
def greedy_block(
    bits, num_nodes, n, sign, w_p, w_a, m_lo, m_hi, ring, state, level_cap, rec_t, rec_v, stats_out
):
    """Window-limited GLR with the two-phase greedy scan.  ring[slot] holds per-pair prefix counts."""
    m = bits.shape[1]
    size = ring.shape[0]
    n_pairs = n * (n - 1) // 2
    pi, pj = _pair_endpoints(num_nodes)
    deg = np.empty(num_nodes)
    into = np.empty(num_nodes)
    chosen = np.empty(num_nodes, np.bool_)
    members = np.empty(n, np.int64)
    window = np.empty(m, np.int64)
    full = stats_out.shape[0] > 0
    t, record = int(state[0]), state[1]
    n_rec = 0
    for row in range(bits.shape[0]):
        t += 1
        cur = t % size
        prev = (t - 1) % size
        for q in range(m):
            ring[cur, q] = ring[prev, q] + bits[row, q]
        if t < m_lo:
            if full:
                stats_out[row] = -np.inf
            continue
        stat = -np.inf
        for length in range(m_lo, min(m_hi, t) + 1):
            old = (t - length) % size
            for q in range(m):
                window[q] = ring[cur, q] - ring[old, q]
            w = _greedy_window(window, sign, pi, pj, num_nodes, n, deg, into, chosen, members)
            r = w_p * w + w_a * (length * n_pairs - w)
            if r > stat:
                stat = r
        if full:
            stats_out[row] = stat
        if stat > record:
            record = stat
            rec_t[n_rec] = t
            rec_v[n_rec] = stat
            n_rec += 1
            if record > level_cap:
                state[0], state[1] = t, record
                return row + 1, n_rec, True
    state[0], state[1] = t, record
    return bits.shape[0], n_rec, False
