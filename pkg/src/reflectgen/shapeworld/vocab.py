"""Closed-vocabulary tokenizer for prompts and feedback templates."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

MAX_TOKENS = 32

PAD, BOS, EOS = "<pad>", "<bos>", "<eos>"

VOCAB: tuple[str, ...] = (
    PAD, BOS, EOS,
    ".", ",",
    "a", "and", "that", "is", "it", "the", "in", "no", "but", "only",
    "exist", "should", "be", "image", "correct",
    "There", "The", "This",
    "left", "right", "of", "above", "below",
    "one", "two", "three", "four",
    "0", "1", "2", "3", "4", "5", "6",
    "red", "green", "blue", "yellow",
    "circle", "square", "triangle", "cross",
    "circles", "squares", "triangles", "crosses",
)

TOKEN_TO_ID = {w: i for i, w in enumerate(VOCAB)}
PAD_ID, BOS_ID, EOS_ID = TOKEN_TO_ID[PAD], TOKEN_TO_ID[BOS], TOKEN_TO_ID[EOS]

_WORD_RE = re.compile(r"[A-Za-z]+|[0-9]+|[.,]|\S")


class VocabError(ValueError):
    """A word outside the closed vocabulary."""


@dataclass(frozen=True)
class TokenSeq:
    """Fixed-width id sequence: BOS ... EOS then PAD out to 32."""

    ids: tuple[int, ...]
    length: int  # non-PAD prefix, including BOS/EOS

    def array(self) -> np.ndarray:
        return np.asarray(self.ids, dtype=np.int64)

    def trimmed(self) -> np.ndarray:
        return np.asarray(self.ids[:self.length], dtype=np.int64)


def tokenize(text: str) -> TokenSeq:
    words = _WORD_RE.findall(text)
    ids = [BOS_ID]
    for w in words:
        if w not in TOKEN_TO_ID:
            raise VocabError(f"word {w!r} is outside the closed vocabulary")
        ids.append(TOKEN_TO_ID[w])
    ids.append(EOS_ID)
    if len(ids) > MAX_TOKENS:
        raise VocabError(f"sequence of {len(ids)} tokens exceeds the limit of {MAX_TOKENS}")
    length = len(ids)
    ids = ids + [PAD_ID] * (MAX_TOKENS - length)
    return TokenSeq(tuple(ids), length)


def detokenize(seq: TokenSeq | np.ndarray) -> str:
    ids = seq.ids if isinstance(seq, TokenSeq) else [int(i) for i in seq]
    parts: list[str] = []
    for i in ids:
        if i < 0 or i >= len(VOCAB):
            raise VocabError(f"id {i} is outside the vocabulary")
        w = VOCAB[i]
        if w in (PAD, BOS, EOS):
            continue
        if w in (".", ",") and parts:
            parts[-1] += w
        else:
            parts.append(w)
    return " ".join(parts)
