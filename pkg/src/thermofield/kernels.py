"""Hot inner loops: Fock-state enumeration, ranking, ladder tables, Wick sums.

Each kernel exists twice: a loop version compiled by numba (``_*_jit``) and a
vectorised numpy version (``_*_np``). The public wrappers dispatch on
:func:`thermofield._jit.use_jit`, so setting ``THERMOFIELD_DISABLE_JIT=1`` runs the
whole package on numpy alone. Both paths must agree bit-for-bit on integer
output and to rounding on floating output; ``tests/test_kernels.py`` enforces it.
"""
import numpy as np
from scipy.special import comb

from ._jit import maybe_njit, use_jit


def count_table(n_modes: int, n_max: int) -> np.ndarray:
    """``T[m, k]`` = number of occupation vectors on ``m`` modes with total <= ``k``."""
    m = np.arange(n_modes + 1)[:, None]
    k = np.arange(n_max + 1)[None, :]
    return comb(m + k, k, exact=False).round().astype(np.int64)


# --------------------------------------------------------------------------
# state enumeration (lexicographic, total occupation <= n_max)


@maybe_njit
def _enumerate_jit(n_modes, n_max, dim):
    out = np.zeros((dim, n_modes), dtype=np.int64)
    cur = np.zeros(n_modes, dtype=np.int64)
    total = 0
    for i in range(1, dim):
        if total < n_max:
            cur[n_modes - 1] += 1
            total += 1
        else:
            j = n_modes - 1
            while cur[j] == 0:
                j -= 1
            total -= cur[j]
            cur[j] = 0
            cur[j - 1] += 1
            total += 1
        out[i, :] = cur
    return out


def _enumerate_np(n_modes, n_max):
    if n_modes == 1:
        return np.arange(n_max + 1, dtype=np.int64)[:, None]
    blocks = []
    for v in range(n_max + 1):
        tail = _enumerate_np(n_modes - 1, n_max - v)
        head = np.full((tail.shape[0], 1), v, dtype=np.int64)
        blocks.append(np.hstack([head, tail]))
    return np.vstack(blocks)


def enumerate_states(n_modes: int, n_max: int) -> np.ndarray:
    dim = int(count_table(n_modes, n_max)[n_modes, n_max])
    if use_jit():
        return _enumerate_jit(n_modes, n_max, dim)
    return _enumerate_np(n_modes, n_max)


# --------------------------------------------------------------------------
# ranking: multi-index -> position in the lexicographic list


@maybe_njit
def _rank_jit(states, table, n_max):
    n, m = states.shape
    out = np.zeros(n, dtype=np.int64)
    for i in range(n):
        r = n_max
        acc = 0
        for j in range(m):
            nj = states[i, j]
            acc += table[m - j, r] - table[m - j, r - nj]
            r -= nj
        out[i] = acc
    return out


def _rank_np(states, table, n_max):
    n, m = states.shape
    before = np.cumsum(states, axis=1) - states
    remaining = n_max - before
    cols = np.arange(m, 0, -1)[None, :]
    hi = table[cols, remaining]
    lo = table[cols, remaining - states]
    return (hi - lo).sum(axis=1)


def rank_states(states: np.ndarray, n_max: int) -> np.ndarray:
    """Lexicographic rank of each row of ``states`` (all with total <= ``n_max``).

    Uses the hockey-stick identity: fixing a prefix and letting mode ``j`` take
    values below ``n_j`` contributes ``T[m-j, r] - T[m-j, r-n_j]`` states.
    """
    states = np.ascontiguousarray(states, dtype=np.int64)
    table = count_table(states.shape[1], n_max)
    if use_jit():
        return _rank_jit(states, table, n_max)
    return _rank_np(states, table, n_max)


# --------------------------------------------------------------------------
# creation-operator ladder table


@maybe_njit
def _ladder_jit(states, table, n_max):
    dim, m = states.shape
    totals = states.sum(axis=1)
    count = 0
    for i in range(dim):
        if totals[i] < n_max:
            count += m
    rows = np.empty(count, dtype=np.int64)
    cols = np.empty(count, dtype=np.int64)
    modes = np.empty(count, dtype=np.int64)
    vals = np.empty(count, dtype=np.float64)
    buf = np.empty(m, dtype=np.int64)
    p = 0
    for i in range(dim):
        if totals[i] >= n_max:
            continue
        for k in range(m):
            for j in range(m):
                buf[j] = states[i, j]
            buf[k] += 1
            r = n_max
            acc = 0
            for j in range(m):
                acc += table[m - j, r] - table[m - j, r - buf[j]]
                r -= buf[j]
            rows[p] = acc
            cols[p] = i
            modes[p] = k
            vals[p] = np.sqrt(buf[k])
            p += 1
    return rows, cols, modes, vals


def _ladder_np(states, table, n_max):
    dim, m = states.shape
    src = np.flatnonzero(states.sum(axis=1) < n_max)
    cols = np.repeat(src, m)
    modes = np.tile(np.arange(m), src.size)
    raised = states[cols].copy()
    raised[np.arange(cols.size), modes] += 1
    rows = _rank_np(raised, table, n_max)
    vals = np.sqrt(raised[np.arange(cols.size), modes].astype(np.float64))
    return rows, cols, modes, vals


def ladder_table(states: np.ndarray, n_max: int):
    """Nonzeros of every single-mode creation operator on the truncated basis.

    Returns ``(rows, cols, modes, vals)``: ``a_k^dagger`` has entry ``vals[i]`` at
    ``(rows[i], cols[i])`` for every ``i`` with ``modes[i] == k``. Transitions out
    of the top sector are absent (truncation). Ordered by source state, then mode.
    """
    states = np.ascontiguousarray(states, dtype=np.int64)
    table = count_table(states.shape[1], n_max)
    if use_jit():
        return _ladder_jit(states, table, n_max)
    return _ladder_np(states, table, n_max)


# --------------------------------------------------------------------------
# Wick sums over perfect matchings


@maybe_njit
def _pairing_sum_jit(pairings, w):
    total = 0.0
    for a in range(pairings.shape[0]):
        prod = 1.0
        for b in range(pairings.shape[1]):
            prod *= w[pairings[a, b, 0], pairings[a, b, 1]]
        total += prod
    return total


def _pairing_sum_np(pairings, w):
    terms = w[pairings[..., 0], pairings[..., 1]].prod(axis=1)
    return float(np.sum(terms))


def pairing_sum(pairings: np.ndarray, w: np.ndarray) -> float:
    """``sum_P prod_{(l,r) in P} w[l, r]`` over the stacked pairings ``(P, N, 2)``."""
    w = np.ascontiguousarray(w, dtype=np.float64)
    pairings = np.ascontiguousarray(pairings, dtype=np.int64)
    if use_jit():
        return float(_pairing_sum_jit(pairings, w))
    return _pairing_sum_np(pairings, w)
