"""Subword tokenizer contract and a deterministic hashed implementation.

A tokenizer maps a word to one or more subword ids (never zero) and
exposes its vocabulary size.  Id 0 is reserved for padding.
"""

from __future__ import annotations

import zlib


class HashTokenizer:
    """Splits words into fixed-length character pieces hashed into a
    closed vocabulary.  Fully deterministic, no training, no files."""

    PAD = 0

    def __init__(self, vocab_size: int = 4096, piece_len: int = 6):
        if vocab_size < 8:
            raise ValueError("vocab_size too small")
        self.vocab_size = vocab_size
        self.piece_len = piece_len

    def word_pieces(self, word: str) -> list[int]:
        if word == "":
            word = "\x00"
        pieces = [
            word[i : i + self.piece_len]
            for i in range(0, len(word), self.piece_len)
        ]
        span = self.vocab_size - 1
        return [1 + zlib.crc32(p.encode("utf-8")) % span for p in pieces]

    def encode_words(self, words: list[str]) -> tuple[list[int], list[bool]]:
        """Flat subword ids plus a word-start flag per subword."""
        ids: list[int] = []
        starts: list[bool] = []
        for word in words:
            pieces = self.word_pieces(word)
            if not pieces:
                raise ValueError(f"tokenizer produced no subwords for {word!r}")
            ids.extend(pieces)
            starts.extend([True] + [False] * (len(pieces) - 1))
        return ids, starts

    def config(self) -> dict:
        return {"type": "hash", "vocab_size": self.vocab_size,
                "piece_len": self.piece_len}


def tokenizer_from_config(config: dict) -> HashTokenizer:
    if config.get("type") != "hash":
        raise ValueError(f"unknown tokenizer type {config.get('type')!r}")
    return HashTokenizer(vocab_size=config["vocab_size"],
                         piece_len=config["piece_len"])
