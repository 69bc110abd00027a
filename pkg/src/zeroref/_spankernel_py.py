"""Pure-Python span codec kernels (fallback for the compiled extension).

Both kernels work on per-word counts indexed 1..n (index 0 unused):
``pops[w]`` spans end at word w, ``closes[w]`` single-word spans sit at
w, ``pushes[w]`` spans start at w.
"""

from __future__ import annotations


def encode_counts(n, starts, ends):
    """Turn spans into per-word counts, dropping stack-incompatible spans.

    Returns (pops, closes, pushes, dropped_indices).  Spans are consumed
    in (start, -end) order; a span crossing a still-open earlier span is
    dropped (the later-starting offender loses).
    """
    pops = [0] * (n + 1)
    closes = [0] * (n + 1)
    pushes = [0] * (n + 1)
    order = sorted(range(len(starts)), key=lambda i: (starts[i], -ends[i]))
    stack: list[int] = []
    dropped: list[int] = []
    for i in order:
        s, e = starts[i], ends[i]
        if s == e:
            closes[s] += 1
            continue
        while stack and stack[-1] < s:
            stack.pop()
        if stack and stack[-1] < e:
            dropped.append(i)
            continue
        stack.append(e)
        pushes[s] += 1
        pops[e] += 1
    return pops, closes, pushes, dropped


def decode_pairs(pops, closes, pushes):
    """Rebuild spans from counts; total on arbitrary inputs.

    Per word: pops close the most recently opened span (unmatched pops
    are ignored), single-word spans are emitted, then pushes open.  Spans
    still open at the end are closed at the last word.
    """
    n = len(pops) - 1
    out = []
    stack: list[int] = []
    for w in range(1, n + 1):
        for _ in range(pops[w]):
            if stack:
                out.append((stack.pop(), w))
        for _ in range(closes[w]):
            out.append((w, w))
        for _ in range(pushes[w]):
            stack.append(w)
    while stack:
        out.append((stack.pop(), n))
    return out
