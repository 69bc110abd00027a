"""Independent brute-force metric implementations used to cross-check
the scorer.  Deliberately naive: explicit pair loops, BFS connectivity,
and exhaustive entity-alignment enumeration."""

from __future__ import annotations

from itertools import permutations


def _f1(p, r):
    return 2 * p * r / (p + r) if p + r else 0.0


def brute_muc(gold: list[set], pred: list[set]) -> tuple[float, float, float]:
    def side(first: list[set], second: list[set]) -> float:
        cluster_of = {}
        for i, c in enumerate(second):
            for m in c:
                cluster_of[m] = i
        num = den = 0
        for c in first:
            members = sorted(c)
            # Connected components of c under "same second-side cluster".
            remaining = set(members)
            components = 0
            while remaining:
                seed = remaining.pop()
                components += 1
                group = {
                    m for m in remaining
                    if seed in cluster_of and cluster_of.get(m) == cluster_of[seed]
                }
                remaining -= group
            num += len(c) - components
            den += len(c) - 1
        return num / den if den else 0.0

    r = side(gold, pred)
    p = side(pred, gold)
    return 100 * p, 100 * r, _f1(100 * p, 100 * r)


def brute_b3(gold: list[set], pred: list[set]) -> tuple[float, float, float]:
    def side(first: list[set], second: list[set]) -> float:
        total = 0.0
        count = 0
        for c in first:
            for m in c:
                overlap = 0
                for c2 in second:
                    if m in c2:
                        overlap = len(c & c2)
                        break
                total += overlap / len(c)
                count += 1
        return total / count if count else 0.0

    r = side(gold, pred)
    p = side(pred, gold)
    return 100 * p, 100 * r, _f1(100 * p, 100 * r)


def brute_ceafe(gold: list[set], pred: list[set]) -> tuple[float, float, float]:
    def phi4(a: set, b: set) -> float:
        return 2.0 * len(a & b) / (len(a) + len(b))

    best = 0.0
    if gold and pred:
        small, large = (gold, pred) if len(gold) <= len(pred) else (pred, gold)
        for perm in permutations(range(len(large)), len(small)):
            total = sum(phi4(small[i], large[j]) for i, j in enumerate(perm))
            best = max(best, total)
    p = best / len(pred) if pred else 0.0
    r = best / len(gold) if gold else 0.0
    return 100 * p, 100 * r, _f1(100 * p, 100 * r)
