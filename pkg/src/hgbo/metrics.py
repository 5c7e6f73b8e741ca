"""Corpus BLEU from additive sufficient statistics (single reference)."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_ORDER = 4


@dataclass(frozen=True)
class BleuStats:
    match_counts: tuple[int, ...] = (0, 0, 0, 0)
    cand_counts: tuple[int, ...] = (0, 0, 0, 0)
    cand_len: int = 0
    ref_len: int = 0

    def __add__(self, other: "BleuStats") -> "BleuStats":
        return BleuStats(
            tuple(a + b for a, b in zip(self.match_counts, other.match_counts)),
            tuple(a + b for a, b in zip(self.cand_counts, other.cand_counts)),
            self.cand_len + other.cand_len,
            self.ref_len + other.ref_len,
        )

    def to_array(self) -> np.ndarray:
        return np.array(
            [*self.match_counts, *self.cand_counts, self.cand_len, self.ref_len],
            dtype=np.int64,
        )

    @classmethod
    def from_array(cls, a) -> "BleuStats":
        a = [int(x) for x in a]
        return cls(tuple(a[0:4]), tuple(a[4:8]), a[8], a[9])

    @classmethod
    def total(cls, stats: Iterable["BleuStats"]) -> "BleuStats":
        out = cls()
        for s in stats:
            out = out + s
        return out


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def sentence_stats(candidate: Sequence[str], reference: Sequence[str]) -> BleuStats:
    """Clipped n-gram matches of ``candidate`` against one reference."""
    matches, totals = [], []
    for n in range(1, MAX_ORDER + 1):
        c = ngrams(candidate, n)
        r = ngrams(reference, n)
        matches.append(sum(min(k, r[g]) for g, k in c.items()))
        totals.append(max(len(candidate) - n + 1, 0))
    return BleuStats(tuple(matches), tuple(totals), len(candidate), len(reference))


def bleu_from_array(a: np.ndarray) -> float:
    """BLEU of a stats array laid out as :meth:`BleuStats.to_array`."""
    cand_len = a[8]
    if cand_len <= 0:
        return 0.0
    m = a[0:4]
    if np.any(m <= 0):
        return 0.0
    log_p = 0.0
    for n in range(MAX_ORDER):
        log_p += math.log(m[n] / a[4 + n])
    bp = min(0.0, 1.0 - a[9] / cand_len)
    return math.exp(bp + log_p / MAX_ORDER)


def corpus_bleu(stats: BleuStats) -> float:
    """Unsmoothed corpus BLEU in [0, 1]; zero if any n-gram order has no match."""
    return bleu_from_array(stats.to_array())


def smoothed_sentence_bleu(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Add-one smoothed sentence BLEU (orders >= 2). Diagnostics only."""
    s = sentence_stats(candidate, reference)
    if s.cand_len == 0:
        return 0.0
    if s.match_counts[0] == 0:
        return 0.0
    log_p = math.log(s.match_counts[0] / s.cand_counts[0])
    for n in range(1, MAX_ORDER):
        log_p += math.log((s.match_counts[n] + 1) / (s.cand_counts[n] + 1))
    bp = min(0.0, 1.0 - s.ref_len / s.cand_len)
    return math.exp(bp + log_p / MAX_ORDER)


def corpus_bleu_of(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]]) -> float:
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} references")
    return corpus_bleu(BleuStats.total(sentence_stats(c, r) for c, r in zip(candidates, references)))


def read_sentences(path) -> list[tuple[str, ...]]:
    with open(path, encoding="utf-8") as f:
        return [tuple(line.split()) for line in f.read().splitlines()]


def write_sentences(path, sentences: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in sentences:
            f.write(" ".join(s) + "\n")
