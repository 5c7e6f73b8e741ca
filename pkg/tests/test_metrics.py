import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgbo.metrics import (
    BleuStats,
    bleu_from_array,
    corpus_bleu,
    corpus_bleu_of,
    read_sentences,
    sentence_stats,
    smoothed_sentence_bleu,
    write_sentences,
)
from oracles import direct_corpus_bleu


def random_corpus(rng, n=None, vocab=6):
    n = n or int(rng.integers(1, 8))
    cands, refs = [], []
    for _ in range(n):
        r = [f"w{int(v)}" for v in rng.integers(vocab, size=int(rng.integers(1, 15)))]
        if rng.random() < 0.5:
            c = list(r)
            for i in range(len(c)):
                if rng.random() < 0.2:
                    c[i] = f"w{int(rng.integers(vocab))}"
        else:
            c = [f"w{int(v)}" for v in rng.integers(vocab, size=int(rng.integers(0, 15)))]
        cands.append(c)
        refs.append(r)
    return cands, refs


def test_identity_is_one():
    refs = [["the", "cat", "sat", "on", "the", "mat"], ["a", "b", "c", "d"]]
    assert corpus_bleu_of(refs, refs) == 1.0


def test_hand_computed():
    cand = "the the the the".split()
    ref = "the cat is on the mat".split()
    s = sentence_stats(cand, ref)
    # unigram "the" is clipped to its reference count of two
    assert s.match_counts == (2, 0, 0, 0)
    assert s.cand_counts == (4, 3, 2, 1)
    assert corpus_bleu(s) == 0.0

    cand = "the cat sat on the mat".split()
    ref = "the cat is on the mat".split()
    s = sentence_stats(cand, ref)
    assert s.match_counts == (5, 3, 1, 0)
    assert corpus_bleu(s) == 0.0
    cand2 = "the cat is on the".split()
    s = sentence_stats(cand2, ref)
    assert s.match_counts == (5, 4, 3, 2)
    # all precisions are 1, only the brevity penalty remains
    assert corpus_bleu(s) == pytest.approx(math.exp(1 - 6 / 5), abs=1e-15)


def test_empty_candidate():
    assert corpus_bleu(sentence_stats([], ["a"])) == 0.0
    assert corpus_bleu(BleuStats()) == 0.0


def test_direct_oracle_many_corpora():
    rng = np.random.default_rng(0)
    for _ in range(500):
        cands, refs = random_corpus(rng)
        assert abs(corpus_bleu_of(cands, refs) - direct_corpus_bleu(cands, refs)) <= 1e-12


def test_stats_are_additive():
    rng = np.random.default_rng(1)
    cands, refs = random_corpus(rng, n=10)
    stats = [sentence_stats(c, r) for c, r in zip(cands, refs)]
    total = BleuStats.total(stats)
    arr = sum(s.to_array() for s in stats)
    np.testing.assert_array_equal(total.to_array(), arr)
    assert BleuStats.from_array(arr) == total
    assert bleu_from_array(arr) == corpus_bleu(total)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    cands, refs = random_corpus(rng)
    perm = rng.permutation(len(cands))
    a = corpus_bleu_of(cands, refs)
    b = corpus_bleu_of([cands[i] for i in perm], [refs[i] for i in perm])
    assert a == pytest.approx(b, abs=1e-15)


def test_bounded_in_unit_interval():
    rng = np.random.default_rng(2)
    for _ in range(200):
        v = corpus_bleu_of(*random_corpus(rng))
        assert 0.0 <= v <= 1.0


def test_matches_bounded_by_both_sides():
    rng = np.random.default_rng(3)
    for _ in range(200):
        cands, refs = random_corpus(rng, n=1)
        s = sentence_stats(cands[0], refs[0])
        for n in range(4):
            assert 0 <= s.match_counts[n] <= s.cand_counts[n]
            assert s.match_counts[n] <= max(len(refs[0]) - n, 0)


def test_brevity_penalty():
    ref = "a b c d e f g h".split()
    short = "a b c d".split()
    assert corpus_bleu(sentence_stats(short, ref)) == pytest.approx(math.exp(1 - 8 / 4), abs=1e-15)
    # no bonus for being longer than the reference
    long_ = ref + ref
    assert corpus_bleu(sentence_stats(long_, ref)) < 1.0


def test_length_mismatch():
    with pytest.raises(ValueError):
        corpus_bleu_of([["a"]], [])


def test_smoothed_sentence_bleu():
    assert smoothed_sentence_bleu("a b".split(), "a b".split()) == pytest.approx(1.0)
    assert 0 < smoothed_sentence_bleu("a x".split(), "a b".split()) < 1
    assert smoothed_sentence_bleu([], ["a"]) == 0.0


def test_sentence_file_roundtrip(tmp_path):
    sents = [("a", "b"), (), ("ü", "c")]
    p = tmp_path / "s.txt"
    write_sentences(p, sents)
    assert read_sentences(p) == list(sents)
