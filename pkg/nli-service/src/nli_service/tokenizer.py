"""Deterministic hashing tokenizer shared by training and serving.

Words are lowercased unicode word-character runs mapped to stable ids by
CRC-32 modulo the vocabulary size. No vocabulary file is needed and the
mapping is identical across processes and platforms.
"""

from __future__ import annotations

import re
import zlib

PAD_ID = 0
CLS_ID = 1
SEP_ID = 2
FIRST_WORD_ID = 3

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


def words(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def count_tokens(text: str) -> int:
    return len(words(text))


def word_ids(text: str, vocab_size: int) -> list[int]:
    """Hash each word to an id in [FIRST_WORD_ID, vocab_size)."""
    span = vocab_size - FIRST_WORD_ID
    if span < 1:
        raise ValueError(f"vocab_size must exceed {FIRST_WORD_ID}, got {vocab_size}")
    return [
        FIRST_WORD_ID + zlib.crc32(word.encode("utf-8")) % span
        for word in words(text)
    ]


def encode_pair(
    premise: str, hypothesis: str, vocab_size: int
) -> tuple[list[int], list[int]]:
    """Render [CLS] premise [SEP] hypothesis [SEP] with 0/1 segment ids."""
    premise_ids = word_ids(premise, vocab_size)
    hypothesis_ids = word_ids(hypothesis, vocab_size)
    ids = [CLS_ID] + premise_ids + [SEP_ID] + hypothesis_ids + [SEP_ID]
    segments = [0] * (len(premise_ids) + 2) + [1] * (len(hypothesis_ids) + 1)
    return ids, segments
