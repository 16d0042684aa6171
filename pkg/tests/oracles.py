"""Independent reference implementations used to check the real code paths.

Everything here is deliberately written differently from src/qintent: the
Levenshtein oracle keeps the full DP matrix, the cosine oracle scores rows
one at a time, and the scorers re-state the definitions from scratch.
"""

from __future__ import annotations

import re
import unicodedata

import numpy as np


def ref_levenshtein(a: str, b: str) -> int:
    m, n = len(a), len(b)
    dist = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        dist[i][0] = i
    for j in range(n + 1):
        dist[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            dist[i][j] = min(
                dist[i - 1][j] + 1,
                dist[i][j - 1] + 1,
                dist[i - 1][j - 1] + (0 if a[i - 1] == b[j - 1] else 1),
            )
    return dist[m][n]


def ref_similarity(a: str, b: str) -> float:
    if not a and not b:
        return 1.0
    return 1.0 - ref_levenshtein(a, b) / max(len(a), len(b))


def ref_token_set(q: str, e: str) -> float:
    qt, et = set(q.split()), set(e.split())
    inter = " ".join(sorted(qt & et))
    a = " ".join(sorted(qt & et) + sorted(qt - et))
    b = " ".join(sorted(qt & et) + sorted(et - qt))
    return max(ref_similarity(inter, a), ref_similarity(inter, b), ref_similarity(a, b))


def ref_partial_ratio(q: str, e: str) -> float:
    shorter, longer = (q, e) if len(q) <= len(e) else (e, q)
    if not shorter:
        return 1.0 if not longer else 0.0
    best = 0.0
    for start in range(len(longer) - len(shorter) + 1):
        window = longer[start : start + len(shorter)]
        best = max(best, ref_similarity(shorter, window))
    return best


def ref_fuzzy(q: str, e: str, alpha: float) -> float:
    return alpha * ref_token_set(q, e) + (1.0 - alpha) * ref_partial_ratio(q, e)


_ALLOWED = re.compile(r"[^0-9a-z '\-&]")


def ref_normalize(raw: str) -> str:
    """Regex-based restatement of the canonicalization rule, iterated the
    same way (fixpoint) but through a different mechanism."""
    text = raw
    while True:
        step = unicodedata.normalize("NFKC", text).lower()
        step = re.sub(r"\s", " ", step)
        step = _ALLOWED.sub("", step)
        step = re.sub(r" +", " ", step).strip()
        if step == text:
            return step
        text = step


def brute_force_rank(index, query_vector: np.ndarray, n: int) -> list[str]:
    """Exact cosine ranking of entities by scoring entries one at a time."""
    best: dict[str, float] = {}
    for eid, _surface, row in index.entries():
        score = float(np.dot(np.asarray(row), query_vector))
        score = max(-1.0, min(1.0, score))
        if eid not in best or score > best[eid]:
            best[eid] = score
    ordered = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))
    return [eid for eid, _ in ordered[:n]]


def unit_query_vector(encoder, text: str) -> np.ndarray:
    vec = np.asarray(encoder.encode(text), dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        out = np.zeros(encoder.dimension)
        out[0] = 1.0
        return out
    return vec / norm
