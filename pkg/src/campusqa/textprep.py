"""Deterministic text preparation: normalization, tokens, encoding, chunking.

Every function here is pure. The same input always produces the same
output, with no external models, lexicons, or configuration lookups.

Note that ``Vocabulary``, ``encode``, and ``pad`` are corpus-analysis
utilities: retrieval works on raw text plus embeddings and never touches
integer-encoded sequences.
"""
from __future__ import annotations

import string
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

_ASCII_PUNCT = frozenset(string.punctuation)


@lru_cache(maxsize=None)
def _is_punct(ch: str) -> bool:
    return ch in _ASCII_PUNCT or unicodedata.category(ch).startswith("P")


def normalize(text: str) -> str:
    """Lowercase, turn punctuation into spaces, and collapse whitespace."""
    lowered = text.lower()
    cleaned = "".join(" " if _is_punct(ch) else ch for ch in lowered)
    return " ".join(cleaned.split())


def tokenize(text: str) -> list[str]:
    """Split normalized text on whitespace."""
    return normalize(text).split()


_MIN_STEM = 3
_VOWELS = frozenset("aeiou")


def _undouble(stem: str) -> str:
    # "runn" -> "run", but keep l/s/z doublings ("fall", "dress", "fizz").
    if (
        len(stem) > _MIN_STEM
        and stem[-1] == stem[-2]
        and stem[-1] not in _VOWELS
        and stem[-1] not in "lsz"
    ):
        return stem[:-1]
    return stem


def _reduce_once(token: str) -> str:
    n = len(token)
    if token.endswith("ing") and n - 3 >= _MIN_STEM:
        return _undouble(token[:-3])
    if token.endswith("ied") and n - 2 >= _MIN_STEM:
        return token[:-3] + "y"
    if token.endswith("ies") and n - 2 >= _MIN_STEM:
        return token[:-3] + "y"
    if token.endswith("ed") and n - 2 >= _MIN_STEM:
        return token[:-2]
    if token.endswith("es") and n - 2 >= _MIN_STEM:
        stem = token[:-2]
        if stem.endswith(("ss", "x", "z", "ch", "sh")):
            return stem
    if token.endswith("s") and not token.endswith("ss") and n - 1 >= _MIN_STEM:
        return token[:-1]
    return token


def lemmatize(token: str) -> str:
    """Reduce an inflected lowercase token with ordered suffix rules.

    Rules are applied repeatedly until no rule fires, which makes the
    function idempotent on its own outputs ("adding" and "added" both
    reduce to "add", "courses" to "course"). Stems never drop below
    three characters.
    """
    current = token
    while True:
        reduced = _reduce_once(current)
        if reduced == current:
            return current
        current = reduced


@dataclass
class Vocabulary:
    """Token-to-integer map in first-seen order; index 0 is padding/unknown."""

    index: dict[str, int] = field(default_factory=dict)

    @classmethod
    def build(cls, token_seqs: Iterable[Sequence[str]]) -> "Vocabulary":
        index: dict[str, int] = {}
        for seq in token_seqs:
            for tok in seq:
                if tok not in index:
                    index[tok] = len(index) + 1
        return cls(index)

    def id_of(self, token: str) -> int:
        return self.index.get(token, 0)

    def __len__(self) -> int:
        return len(self.index)


def encode(tokens: Sequence[str], vocab: Vocabulary) -> list[int]:
    """Map tokens to vocabulary indices; out-of-vocabulary tokens become 0."""
    return [vocab.id_of(tok) for tok in tokens]


def pad(ids: Sequence[int], length: int = 50) -> list[int]:
    """Right-pad with zeros to exactly ``length``; longer inputs keep the head."""
    if length < 1:
        raise ValueError("length must be at least 1")
    if len(ids) >= length:
        return list(ids[:length])
    return list(ids) + [0] * (length - len(ids))


@dataclass(frozen=True)
class Chunk:
    text: str
    start_offset: int
    chunk_index: int


_SEPARATORS = ("\n\n", "\n", ". ", "! ", "? ", " ")


def _find_cut(text: str, start: int, chunk_size: int, floor: int) -> int:
    # Prefer cutting after the most structural separator in the window,
    # but never cut in the first part of the window (tiny chunks stall
    # progress); fall through to a hard character cut.
    window_end = start + chunk_size
    for sep in _SEPARATORS:
        pos = text.rfind(sep, start, window_end)
        if pos != -1 and pos + len(sep) > floor:
            return pos + len(sep)
    return window_end


def split_recursive(text: str, chunk_size: int = 1000, overlap: int = 200) -> list[Chunk]:
    """Split text into chunks of at most ``chunk_size`` characters.

    Cut points prefer, in order: paragraph breaks, newlines, sentence
    ends, spaces, and finally a hard character boundary. Consecutive
    chunks overlap by ``overlap`` characters so context carries across
    boundaries. Chunks are exact substrings of the source: dropping each
    chunk's leading overlap and concatenating reproduces the input.
    """
    if not 0 <= overlap < chunk_size:
        raise ValueError("overlap must satisfy 0 <= overlap < chunk_size")
    if not text:
        return []
    chunks: list[Chunk] = []
    start = 0
    n = len(text)
    while n - start > chunk_size:
        floor = start + max(chunk_size // 2, overlap)
        end = _find_cut(text, start, chunk_size, floor)
        chunks.append(Chunk(text[start:end], start, len(chunks)))
        start = max(end - overlap, start + 1)
    chunks.append(Chunk(text[start:], start, len(chunks)))
    return chunks
