import math

import numpy as np
import pytest

from hgbo.mert import envelope_segments, line_search, merge_nbest, mert_outer, optimize_on_lists, upper_envelope
from hgbo.simulator import NBestList, generate_task, perturbed_start
from hgbo.tuner import NBestCandidates, TunerConfig
from oracles import grid_bleu_along


def test_two_lines_cross_at_one_and_a_half():
    # score_0 = 3 - gamma, score_1 = 0 + gamma
    segs = envelope_segments([3.0, 0.0], [-1.0, 1.0])
    assert len(segs) == 2
    assert segs[0].hypothesis_index == 0 and segs[0].start == -math.inf
    assert segs[1].hypothesis_index == 1
    assert segs[0].end == segs[1].start == 1.5


def test_envelope_parallel_and_identical_lines():
    assert upper_envelope([1.0, 2.0], [0.5, 0.5]) == [(1, -math.inf)]
    assert upper_envelope([1.0, 1.0], [0.5, 0.5]) == [(0, -math.inf)]
    # a line through the crossing point of two others never wins an interval
    env = upper_envelope([0.0, 0.0, 0.0], [-1.0, 0.0, 1.0])
    assert [i for i, _ in env] == [0, 2]


def test_envelope_matches_sampled_argmax():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        a = rng.normal(size=n)
        b = rng.normal(size=n)
        segs = envelope_segments(a, b)
        starts = [s.start for s in segs]
        assert all(x < y for x, y in zip(starts, starts[1:]))
        for g in rng.uniform(-10, 10, size=1000):
            seg = segs[int(np.searchsorted(starts, g, side="right")) - 1]
            scores = a + g * b
            assert scores[seg.hypothesis_index] >= scores.max() - 1e-12


def random_lists(rng, num_sent=4, n=5, K=3, vocab=4):
    nbests, refs = [], []
    for s in range(num_sent):
        ref = tuple(f"w{int(v)}" for v in rng.integers(vocab, size=6))
        hyps = {}
        while len(hyps) < n:
            toks = tuple(ref[i] if rng.random() < 0.6 else f"w{int(rng.integers(vocab))}" for i in range(int(rng.integers(4, 8))) if i < len(ref)) or ("x",)
            hyps.setdefault(toks, {k: float(rng.normal()) for k in range(K)})
        nbests.append(NBestList(s, tuple(hyps.items())))
        refs.append(ref)
    return nbests, refs


def test_crossing_changes_corpus_bleu():
    ref = ("a", "b", "c", "d")
    nb = [NBestList(0, ((("x", "y", "z", "q"), {0: 1.0}), (ref, {1: 1.0})))]
    # scores 3 - gamma and gamma
    gamma, bleu = line_search(nb, [ref], np.array([3.0, 0.0]), np.array([-1.0, 1.0]))
    # hypothesis 1 wins for gamma > 1.5; unbounded interval clamped one unit past the boundary
    assert gamma == pytest.approx(2.5)
    assert bleu == 1.0


def test_line_search_against_dense_grid():
    rng = np.random.default_rng(1)
    for _ in range(20):
        nbests, refs = random_lists(rng)
        hyps = [nb.hypotheses for nb in nbests]
        w = rng.normal(size=3)
        d = rng.normal(size=3)
        gamma, bleu = line_search(nbests, refs, w, d)
        grid = grid_bleu_along(hyps, refs, w, d, np.linspace(-10, 10, 10**5))
        assert bleu >= grid.max() - 1e-12
        assert grid_bleu_along(hyps, refs, w, d, [gamma])[0] == pytest.approx(bleu, abs=1e-12)


def test_line_search_never_worse_than_zero():
    rng = np.random.default_rng(2)
    for _ in range(100):
        nbests, refs = random_lists(rng)
        w, d = rng.normal(size=3), rng.normal(size=3)
        c = NBestCandidates(nbests, refs, 3)
        _, bleu = line_search(c, None, w, d)
        assert bleu >= c.bleu(w) - 1e-12


def test_line_search_errors():
    nb = [NBestList(0, ((("a",), {0: 1.0}),))]
    with pytest.raises(ValueError):
        line_search(nb, [("a",)], np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        line_search(nb, [("a",)], np.zeros(2), np.ones(3))


def test_merge_idempotent():
    rng = np.random.default_rng(3)
    nbests, _ = random_lists(rng)
    pools, added = merge_nbest(None, nbests)
    assert added == sum(len(nb) for nb in nbests)
    snapshot = [dict(p) for p in pools]
    pools, added = merge_nbest(pools, nbests)
    assert added == 0
    assert pools == snapshot


def test_optimize_on_lists_trace_non_decreasing():
    rng = np.random.default_rng(4)
    nbests, refs = random_lists(rng, num_sent=6)
    c = NBestCandidates(nbests, refs, 3)
    w, trace = optimize_on_lists(c, rng.normal(size=3), np.random.default_rng(0))
    assert all(y > x for x, y in zip(trace, trace[1:]))
    assert c.bleu(w) == pytest.approx(trace[-1], abs=1e-12)


def test_mert_outer_on_small_task():
    task = generate_task(num_sentences=8, K=5, depth=4, seed=2, fanout=3)
    w0 = perturbed_start(task, 1.0, seed=3)
    cfg = TunerConfig(outer_iters=5, nbest_size=20)
    w, rec = mert_outer(task, cfg, w0)
    assert rec.variant == "MERT"
    assert rec.decodes <= 5
    assert rec.final_dev_bleu == max(rec.dev_trace)
    assert rec.final_dev_bleu > rec.dev_trace[0]
    assert rec.final_dev_bleu == pytest.approx(task.bleu(w), abs=1e-12)
    for it in rec.iterations:
        if it.inner_trace:
            assert all(y >= x for x, y in zip(it.inner_trace, it.inner_trace[1:]))
    again = mert_outer(task, cfg, w0)[1]
    assert again.to_dict() == rec.to_dict()
