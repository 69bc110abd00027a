"""Model input windows: one segment per sentence.

A segment holds the full current sentence, then up to ``lookahead``
following subwords, then as many immediately preceding subwords as the
length budget allows (in that priority order).  Window length is counted
in subwords; context may start or end mid-word, in which case the cut
word simply has no word-start flag inside the window.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

from .conllu import Document

DEFAULT_LOOKAHEAD = 50


@dataclass
class Segment:
    doc_id: str
    sentence_index: int
    subword_ids: list[int]
    word_starts: list[bool]
    current_range: tuple[int, int]  # inclusive subword positions
    # Flat document token position for each word-start subword, in order.
    word_positions: list[int]
    targets: Optional[object] = None

    def __len__(self) -> int:
        return len(self.subword_ids)

    def word_start_subwords(self) -> list[int]:
        return [i for i, s in enumerate(self.word_starts) if s]

    def position_to_subword(self) -> dict[int, int]:
        """Inverse of window_positions: document token position -> the
        subword where that token starts (tokens cut by the window edge
        are absent)."""
        return {pos: sub for sub, pos in window_positions(self).items()}

    def current_word_subwords(self) -> list[int]:
        lo, hi = self.current_range
        return [i for i in self.word_start_subwords() if lo <= i <= hi]

    def current_word_positions(self) -> list[int]:
        lo, hi = self.current_range
        starts = self.word_start_subwords()
        return [self.word_positions[k] for k, i in enumerate(starts)
                if lo <= i <= hi]


def window_positions(segment: Segment) -> dict[int, int]:
    """Map word-start subword positions to document token positions."""
    starts = segment.word_start_subwords()
    return {sub: segment.word_positions[k] for k, sub in enumerate(starts)}


def build_segments(
    doc: Document,
    tokenizer,
    max_len: int,
    lookahead: int = DEFAULT_LOOKAHEAD,
) -> list[Segment]:
    """One segment per sentence of ``doc``.

    Empty-node tokens are tokenized like surface words at their position.
    A sentence longer than ``max_len`` subwords is truncated on the right
    with a warning.
    """
    if lookahead < 0:
        raise ValueError("lookahead must be >= 0")
    if not doc.sentences:
        return []

    flat_ids: list[int] = []
    flat_starts: list[bool] = []
    flat_positions: list[int] = []  # document token position per subword
    sentence_bounds: list[tuple[int, int]] = []  # [start, end) in subwords
    position = 0
    for sent in doc.sentences:
        begin = len(flat_ids)
        for tok in sent.tokens:
            pieces = tokenizer.word_pieces(tok.form)
            if not pieces:
                raise ValueError(
                    f"tokenizer produced no subwords for token {tok.id!r} "
                    f"({tok.form!r})"
                )
            flat_ids.extend(pieces)
            flat_starts.extend([True] + [False] * (len(pieces) - 1))
            flat_positions.extend([position] * len(pieces))
            position += 1
        sentence_bounds.append((begin, len(flat_ids)))

    segments = []
    for index, (begin, end) in enumerate(sentence_bounds):
        cur_len = end - begin
        if max_len < cur_len + 2:
            if cur_len > max_len:
                warnings.warn(
                    f"sentence {index} of {doc.doc_id!r} has {cur_len} subwords; "
                    f"truncated to max_len {max_len}"
                )
                end = begin + max_len
                cur_len = max_len
            else:
                warnings.warn(
                    f"sentence {index} of {doc.doc_id!r} nearly fills "
                    f"max_len {max_len}; no room for context"
                )
        budget = max_len - cur_len
        right = min(lookahead, len(flat_ids) - end, budget)
        left = min(budget - right, begin)
        lo = begin - left
        hi = end + right
        ids = flat_ids[lo:hi]
        starts = list(flat_starts[lo:hi])
        word_positions = [flat_positions[lo + i] for i, s in enumerate(starts) if s]
        segments.append(
            Segment(
                doc_id=doc.doc_id,
                sentence_index=index,
                subword_ids=ids,
                word_starts=starts,
                current_range=(left, left + cur_len - 1),
                word_positions=word_positions,
            )
        )
    return segments
