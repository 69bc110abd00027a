"""Per-word tags encoding possibly nested mention spans.

Each word carries three counts: ``pops`` (spans ending here that opened
earlier), ``closes`` (single-word spans) and ``pushes`` (spans opening
here).  Decoding is stack-based: pops close the most recently opened
span, so any span set without crossing multi-word spans round-trips
exactly.  Crossing spans are encoded best-effort (the later-starting
span is dropped and reported).

The count loops are implemented twice: a compiled extension and a pure
Python fallback, selected at import (set ``ZEROREF_PURE_PY=1`` to force
the fallback).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable

if os.environ.get("ZEROREF_PURE_PY"):
    from . import _spankernel_py as _kernel

    COMPILED = False
else:
    try:
        from . import _spankernel as _kernel  # type: ignore[attr-defined]

        COMPILED = True
    except ImportError:
        from . import _spankernel_py as _kernel

        COMPILED = False

DEFAULT_CAP = 4


@dataclass(frozen=True)
class SpanTag:
    pops: int = 0
    closes: int = 0
    pushes: int = 0

    def is_empty(self) -> bool:
        return self.pops == 0 and self.closes == 0 and self.pushes == 0


EMPTY_TAG = SpanTag()


@dataclass
class EncodeReport:
    """What encode_spans could not represent faithfully."""

    dropped: list[tuple[int, int]] = field(default_factory=list)
    clamped: int = 0

    @property
    def clean(self) -> bool:
        return not self.dropped and self.clamped == 0


def encode_spans(
    n: int,
    spans: Iterable[tuple[int, int]],
    cap: int = DEFAULT_CAP,
) -> tuple[list[SpanTag], EncodeReport]:
    """Encode spans over words 1..n into one tag per word.

    Spans are (start, end) inclusive, 1-based.  Decoding inverts the
    encoding exactly for stack-compatible span sets; the report lists
    dropped crossing spans and counts cap-clamped counts.
    """
    spans = list(spans)
    seen = set()
    for s, e in spans:
        if not (1 <= s <= e <= n):
            raise ValueError(f"span ({s}, {e}) out of range 1..{n}")
        if (s, e) in seen:
            raise ValueError(f"duplicate span ({s}, {e})")
        seen.add((s, e))
    starts = [s for s, _ in spans]
    ends = [e for _, e in spans]
    pops, closes, pushes, dropped_idx = _kernel.encode_counts(n, starts, ends)
    report = EncodeReport(dropped=[spans[i] for i in dropped_idx])
    tags = []
    for w in range(1, n + 1):
        a, b, c = pops[w], closes[w], pushes[w]
        clamped_a, clamped_b, clamped_c = min(a, cap), min(b, cap), min(c, cap)
        if (clamped_a, clamped_b, clamped_c) != (a, b, c):
            report.clamped += (a - clamped_a) + (b - clamped_b) + (c - clamped_c)
        tags.append(SpanTag(clamped_a, clamped_b, clamped_c))
    return tags, report


def decode_tags(tags: Iterable[SpanTag]) -> set[tuple[int, int]]:
    """Decode tags into spans; total on arbitrary tag sequences."""
    tags = list(tags)
    n = len(tags)
    pops = [0] + [t.pops for t in tags]
    closes = [0] + [t.closes for t in tags]
    pushes = [0] + [t.pushes for t in tags]
    if n == 0:
        return set()
    return set(_kernel.decode_pairs(pops, closes, pushes))


# ---------------------------------------------------------------------------
# Label vocabulary (the classification head's label space)


def tag_to_id(tag: SpanTag, cap: int = DEFAULT_CAP) -> int:
    return (tag.pops * (cap + 1) + tag.closes) * (cap + 1) + tag.pushes


def tag_from_id(label_id: int, cap: int = DEFAULT_CAP) -> SpanTag:
    base = cap + 1
    pushes = label_id % base
    closes = (label_id // base) % base
    pops = label_id // (base * base)
    return SpanTag(pops, closes, pushes)


def tag_to_label(tag: SpanTag) -> str:
    parts = []
    for name, count in (("POP", tag.pops), ("CLOSE", tag.closes),
                        ("PUSH", tag.pushes)):
        if count == 1:
            parts.append(name)
        elif count > 1:
            parts.append(f"{name}^{count}")
    return " ".join(parts) if parts else "O"


def tag_from_label(label: str) -> SpanTag:
    if label == "O":
        return EMPTY_TAG
    counts = {"POP": 0, "CLOSE": 0, "PUSH": 0}
    for part in label.split(" "):
        name, _, count = part.partition("^")
        if name not in counts:
            raise ValueError(f"unknown tag component {part!r}")
        counts[name] = int(count) if count else 1
    return SpanTag(counts["POP"], counts["CLOSE"], counts["PUSH"])


def label_vocabulary(cap: int = DEFAULT_CAP) -> list[str]:
    """All labels in id order; fixed and enumerable."""
    return [tag_to_label(tag_from_id(i, cap)) for i in range((cap + 1) ** 3)]
