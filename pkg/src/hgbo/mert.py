"""N-best MERT baseline: exact line search over the piecewise-constant BLEU surface.

Along ``w + gamma * d`` every hypothesis score is linear in ``gamma``. The
per-sentence argmax is read off the upper envelope of those lines; merging
the envelope breakpoints of all sentences gives the intervals on which corpus
BLEU is constant.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from .hypergraph import DimensionError
from .metrics import BleuStats, bleu_from_array
from .simulator import NBestList
from .tuner import IterationRecord, NBestCandidates, RunRecord, TunerConfig, _dev_bleu

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnvelopeSegment:
    start: float  # inclusive, -inf for the first segment
    end: float  # exclusive, +inf for the last segment
    hypothesis_index: int
    stats: BleuStats | None = None


def upper_envelope(intercepts, slopes) -> list[tuple[int, float]]:
    """Lines on the upper envelope as ``(index, gamma_start)``, left to right.

    Parallel lines keep the higher intercept; identical lines keep the lower
    index.
    """
    a = np.asarray(intercepts, dtype=float)
    b = np.asarray(slopes, dtype=float)
    order = np.lexsort((np.arange(a.size), -a, b))
    env: list[list] = []  # [index, start, intercept, slope]
    for i in order:
        ai, bi = a[i], b[i]
        if env and env[-1][3] == bi:
            continue
        x = -math.inf
        while env:
            j, start, aj, bj = env[-1]
            x = (aj - ai) / (bi - bj)
            if x <= start:
                env.pop()
                x = -math.inf
            else:
                break
        env.append([int(i), x, ai, bi])
    return [(e[0], e[1]) for e in env]


def envelope_segments(intercepts, slopes) -> list[EnvelopeSegment]:
    env = upper_envelope(intercepts, slopes)
    out = []
    for k, (i, start) in enumerate(env):
        end = env[k + 1][1] if k + 1 < len(env) else math.inf
        out.append(EnvelopeSegment(start, end, i))
    return out


def _as_candidates(nbests, refs, num_features) -> NBestCandidates:
    if isinstance(nbests, NBestCandidates):
        return nbests
    return NBestCandidates(nbests, refs, num_features)


def line_search(nbests, refs, w, direction) -> tuple[float, float]:
    """Exact maximizer of corpus BLEU along ``w + gamma * direction``.

    Returns the midpoint of the leftmost best interval and its BLEU. An
    unbounded best interval is clamped to one unit beyond its finite end;
    if BLEU is constant the result is ``gamma = 0``.
    """
    w = np.asarray(w, dtype=float)
    d = np.asarray(direction, dtype=float)
    if w.shape != d.shape:
        raise DimensionError("weights and direction differ in shape")
    if not np.any(d):
        raise ValueError("direction must be nonzero")
    c = _as_candidates(nbests, refs, w.shape[0])
    if c.num_features != w.shape[0]:
        raise DimensionError(f"weights have {w.shape[0]} entries, candidates K={c.num_features}")
    a_all = c.features @ w
    b_all = c.features @ d

    current = np.zeros(len(c.starts), dtype=np.int64)
    events: list[tuple[float, int, int]] = []
    for s, (st, n) in enumerate(zip(c.starts, c.counts)):
        env = upper_envelope(a_all[st:st + n], b_all[st:st + n])
        current[s] = st + env[0][0]
        for i, x in env[1:]:
            events.append((x, s, int(st + i)))
    events.sort()
    total = c.hyp_stats[current].sum(0)

    if not events:
        return 0.0, bleu_from_array(total)

    # intervals: (-inf, x1), [x1, x2), ..., [xm, inf)
    best_bleu = bleu_from_array(total)
    best_lo, best_hi = -math.inf, events[0][0]
    k = 0
    while k < len(events):
        x = events[k][0]
        while k < len(events) and events[k][0] == x:
            _, s, h = events[k]
            total += c.hyp_stats[h] - c.hyp_stats[current[s]]
            current[s] = h
            k += 1
        hi = events[k][0] if k < len(events) else math.inf
        val = bleu_from_array(total)
        if val > best_bleu:
            best_bleu, best_lo, best_hi = val, x, hi
    if math.isinf(best_lo) and math.isinf(best_hi):
        gamma = 0.0
    elif math.isinf(best_lo):
        gamma = best_hi - 1.0
    elif math.isinf(best_hi):
        gamma = best_lo + 1.0
    else:
        gamma = 0.5 * (best_lo + best_hi)
    return float(gamma), float(best_bleu)


def merge_nbest(accumulated: list[dict] | None, new: list[NBestList]) -> tuple[list[dict], int]:
    """Add unseen translations to per-sentence pools; return pools and count added."""
    if accumulated is None:
        accumulated = [dict() for _ in new]
    if len(accumulated) != len(new):
        raise ValueError("n-best lists not aligned with accumulated pools")
    added = 0
    for pool, nb in zip(accumulated, new):
        for toks, feats in nb.hypotheses:
            if toks not in pool:
                pool[toks] = feats
                added += 1
    return accumulated, added


def pools_to_nbest(pools: list[dict], sentence_ids) -> list[NBestList]:
    return [NBestList(sid, tuple(p.items())) for sid, p in zip(sentence_ids, pools)]


def optimize_on_lists(cands: NBestCandidates, w, rng, random_directions: int = 10, max_passes: int = 50):
    """Greedy line-search ascent on fixed lists. Returns (weights, BLEU trace)."""
    w = np.asarray(w, dtype=float).copy()
    K = w.shape[0]
    cur = cands.bleu(w)
    trace = [cur]
    for _ in range(max_passes):
        dirs = list(np.eye(K))
        for _ in range(random_directions):
            v = rng.normal(size=K)
            dirs.append(v / np.linalg.norm(v))
        best = None
        for d in dirs:
            g, val = line_search(cands, None, w, d)
            if val > cur + 1e-12 and (best is None or val > best[1]):
                best = (g, val, d)
        if best is None:
            break
        w = w + best[0] * best[2]
        cur = best[1]
        trace.append(cur)
    return w, trace


def mert_outer(task, cfg: TunerConfig, w0, random_directions: int = 10, max_passes: int = 50,
               keep_candidates: bool = False) -> tuple[np.ndarray, RunRecord]:
    """Classical MERT: decode N-best, accumulate, line-search ascent, repeat.

    Stops when decoding adds no new translation to the accumulated lists or
    after ``cfg.outer_iters`` decodes. Returns the weights with the best
    decoded dev BLEU.
    """
    w = np.asarray(w0, dtype=float).copy()
    if w.shape != (task.num_features,):
        raise DimensionError(f"w0 has shape {w.shape}, task has K={task.num_features}")
    record = RunRecord("MERT")
    pools = None
    best_w, best_dev = w.copy(), -math.inf
    converged = False
    for i in range(cfg.outer_iters):
        t0 = time.perf_counter()
        nb = task.decode_nbest(w, cfg.nbest_size)
        record.decodes += 1
        pools, added = merge_nbest(pools, nb)
        dev = float(_dev_bleu(task, w))
        if dev > best_dev:
            best_w, best_dev = w.copy(), dev
        cands = NBestCandidates(pools_to_nbest(pools, [x.sentence_id for x in nb]), task.references, task.num_features)
        it = IterationRecord(iteration=i, weights=w.tolist(), dev_bleu=dev, candidates=cands.size())
        record.iterations.append(it)
        if keep_candidates:
            record.candidate_sets.append(cands)
        if i > 0 and added == 0:
            converged = True
            it.wall_time = time.perf_counter() - t0
            break
        rng = np.random.default_rng([cfg.seed, i])
        w, trace = optimize_on_lists(cands, w, rng, random_directions, max_passes)
        it.bo_score = trace[-1]
        it.best_x = w.tolist()
        it.inner_trace = trace
        it.wall_time = time.perf_counter() - t0
    if not converged:
        dev = float(_dev_bleu(task, w))
        record.iterations.append(IterationRecord(iteration=cfg.outer_iters, weights=w.tolist(), dev_bleu=dev))
        if dev > best_dev:
            best_w, best_dev = w.copy(), dev
    record.final_weights = best_w.tolist()
    record.final_dev_bleu = best_dev
    return best_w, record
