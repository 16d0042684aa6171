"""Levenshtein kernels behind the fuzzy scorers.

Two interchangeable backends compute the same results: numba JIT kernels
(default when numba imports) and a vectorized pure-numpy path. Set
``QINTENT_NO_NUMBA=1`` to force the numpy fallback. ``benchmarks/bench_kernels.py``
compares the two.
"""

from __future__ import annotations

import os

import numpy as np

_NUMBA_DISABLED = os.environ.get("QINTENT_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _NUMBA_DISABLED:
        raise ImportError("numba disabled by QINTENT_NO_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def _codes(s: str) -> np.ndarray:
    return np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32)


# ---------------------------------------------------------------------------
# numpy backend: two-row DP with the min-accumulate trick for the
# left-neighbor dependency, so each row update is fully vectorized.
# ---------------------------------------------------------------------------

def levenshtein_numpy(a: np.ndarray, b: np.ndarray) -> int:
    m, n = a.size, b.size
    if m == 0:
        return n
    if n == 0:
        return m
    offsets = np.arange(n + 1, dtype=np.int64)
    prev = offsets.copy()
    for i in range(m):
        sub = prev[:-1] + (b != a[i])
        cur = np.minimum(prev[1:] + 1, sub)
        cur = np.concatenate(([prev[0] + 1], cur))
        # cur[j] = min_{i<=j} cur[i] + (j - i), computed by one accumulate
        cur = np.minimum.accumulate(cur - offsets) + offsets
        prev = cur
    return int(prev[n])


def best_window_sim_numpy(s: np.ndarray, l: np.ndarray) -> float:
    """Max over all len(s)-sized windows w of l of 1 - lev(s, w)/len(s).

    Requires 0 < len(s) <= len(l). All windows advance one DP in parallel:
    the window axis is vectorized, the accumulate trick handles each row.
    """
    m, n = s.size, l.size
    k = n - m + 1
    windows = np.lib.stride_tricks.sliding_window_view(l, m)
    offsets = np.arange(m + 1, dtype=np.int64)
    prev = np.broadcast_to(offsets, (k, m + 1)).copy()
    left = np.empty((k, 1), dtype=np.int64)
    for i in range(m):
        sub = prev[:, :-1] + (windows != s[i])
        cur = np.minimum(prev[:, 1:] + 1, sub)
        left[:, 0] = prev[:, 0] + 1
        cur = np.concatenate((left, cur), axis=1)
        cur = np.minimum.accumulate(cur - offsets, axis=1) + offsets
        prev = cur
    best_dist = int(prev[:, m].min())
    return 1.0 - best_dist / m


# ---------------------------------------------------------------------------
# numba backend: straightforward two-row loops, JIT compiled and cached.
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _lev_nb(a, b):  # pragma: no cover - exercised via dispatch
        m = a.size
        n = b.size
        if m == 0:
            return n
        if n == 0:
            return m
        prev = np.arange(n + 1, dtype=np.int64)
        cur = np.empty(n + 1, dtype=np.int64)
        for i in range(1, m + 1):
            cur[0] = i
            ai = a[i - 1]
            for j in range(1, n + 1):
                cost = prev[j - 1] + (0 if b[j - 1] == ai else 1)
                if prev[j] + 1 < cost:
                    cost = prev[j] + 1
                if cur[j - 1] + 1 < cost:
                    cost = cur[j - 1] + 1
                cur[j] = cost
            prev, cur = cur, prev
        return prev[n]

    @njit(cache=True)
    def _best_window_sim_nb(s, l):  # pragma: no cover - exercised via dispatch
        m = s.size
        n = l.size
        best = n + 1
        prev = np.empty(m + 1, dtype=np.int64)
        cur = np.empty(m + 1, dtype=np.int64)
        for start in range(n - m + 1):
            for j in range(m + 1):
                prev[j] = j
            for i in range(1, m + 1):
                cur[0] = i
                si = s[i - 1]
                for j in range(1, m + 1):
                    cost = prev[j - 1] + (0 if l[start + j - 1] == si else 1)
                    if prev[j] + 1 < cost:
                        cost = prev[j] + 1
                    if cur[j - 1] + 1 < cost:
                        cost = cur[j - 1] + 1
                    cur[j] = cost
                prev, cur = cur, prev
            if prev[m] < best:
                best = prev[m]
                if best == 0:
                    break
        return 1.0 - best / m

    def levenshtein_numba(a: np.ndarray, b: np.ndarray) -> int:
        return int(_lev_nb(a, b))

    def best_window_sim_numba(s: np.ndarray, l: np.ndarray) -> float:
        return float(_best_window_sim_nb(s, l))

else:
    levenshtein_numba = None
    best_window_sim_numba = None


BACKEND = "numba" if HAS_NUMBA else "numpy"
_lev = levenshtein_numba if HAS_NUMBA else levenshtein_numpy
_window = best_window_sim_numba if HAS_NUMBA else best_window_sim_numpy


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance (insert, delete, substitute)."""
    return _lev(_codes(a), _codes(b))


def normalized_similarity(a: str, b: str) -> float:
    """1 - lev(a, b) / max(len); 1.0 when both strings are empty."""
    if not a and not b:
        return 1.0
    return 1.0 - levenshtein(a, b) / max(len(a), len(b))


def best_window_similarity(needle: str, haystack: str) -> float:
    """Best normalized similarity of ``needle`` against any same-length
    contiguous window of ``haystack``; requires 0 < len(needle) <= len(haystack)."""
    if not needle or len(needle) > len(haystack):
        raise ValueError("needle must be non-empty and no longer than haystack")
    return _window(_codes(needle), _codes(haystack))
