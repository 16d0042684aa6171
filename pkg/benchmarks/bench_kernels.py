"""Compare the numba kernels against the pure-numpy fallback.

Times the edit-distance kernel and the windowed partial-ratio kernel on
random normalized-text workloads, plus the end-to-end fuzzy scorer. Run:

    python benchmarks/bench_kernels.py [--pairs 2000] [--seed 7]

The numpy path is what you get with QINTENT_NO_NUMBA=1; both paths compute
identical results (asserted here before timing).
"""

from __future__ import annotations

import argparse
import random
import time

import numpy as np

from qintent import _kernels

ALPHABET = "abcdefghijklmnop '-&0123456789"


def _codes(s: str) -> np.ndarray:
    return np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32)


def make_pairs(n: int, seed: int, max_len: int = 40):
    rng = random.Random(seed)
    pairs = []
    for _ in range(n):
        a = "".join(rng.choice(ALPHABET) for _ in range(rng.randint(1, max_len)))
        b = "".join(rng.choice(ALPHABET) for _ in range(rng.randint(1, max_len)))
        pairs.append((_codes(a), _codes(b)))
    return pairs


def time_fn(fn, pairs, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for a, b in pairs:
            fn(a, b)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pairs", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    if not _kernels.HAS_NUMBA:
        raise SystemExit(
            "numba backend unavailable (QINTENT_NO_NUMBA set or numba missing);"
            " nothing to compare"
        )

    pairs = make_pairs(args.pairs, args.seed)
    window_pairs = [(a, b) if a.size <= b.size else (b, a) for a, b in pairs]

    # warm up JIT compilation before timing, and confirm agreement
    for a, b in pairs[:50]:
        assert _kernels.levenshtein_numba(a, b) == _kernels.levenshtein_numpy(a, b)
    for s, l in window_pairs[:50]:
        nb = _kernels.best_window_sim_numba(s, l)
        npv = _kernels.best_window_sim_numpy(s, l)
        assert abs(nb - npv) < 1e-12

    rows = []
    lev_nb = time_fn(_kernels.levenshtein_numba, pairs)
    lev_np = time_fn(_kernels.levenshtein_numpy, pairs)
    rows.append(("levenshtein", lev_nb, lev_np))
    win_nb = time_fn(_kernels.best_window_sim_numba, window_pairs)
    win_np = time_fn(_kernels.best_window_sim_numpy, window_pairs)
    rows.append(("partial-ratio window", win_nb, win_np))

    print(f"{args.pairs} random pairs (len <= 40), best of 3 runs\n")
    print(f"{'kernel':<22} {'numba':>10} {'numpy':>10} {'speedup':>9}")
    for name, nb, npv in rows:
        print(f"{name:<22} {nb * 1e3:9.1f}ms {npv * 1e3:9.1f}ms {npv / nb:8.1f}x")

    from qintent.fuzzy import fuzzy_score

    texts = [
        ("wildflower", "wildflower bites"),
        ("better chew", "better chew farms"),
        ("450 north", "450 north craft ales"),
        ("pesto pasta", "north market deli"),
    ]
    start = time.perf_counter()
    for _ in range(2000):
        for q, e in texts:
            fuzzy_score(q, e, 0.6)
    total = time.perf_counter() - start
    per_call = total / (2000 * len(texts)) * 1e6
    print(f"\nfuzzy_score end-to-end ({_kernels.BACKEND} backend): {per_call:.1f} us/call")


if __name__ == "__main__":
    main()
