"""Synthetic translation tasks with a planted optimum and a beam-pruning decoder.

Each sentence gets a binarized forest over its source positions. Leaves offer
alternative word translations, internal nodes offer monotone, swapped and
insertion combinations of their two children. One derivation per sentence is
planted to yield the reference and to beat every local competitor by a
margin under the true weights, so decoding with the true weights gives
BLEU 1.0 at any beam.

"Decoding" with weights ``w`` keeps the ``beam`` best incoming edges of every
node by Viterbi inside score, which makes the candidate space depend on ``w``
the way a real beam-search decoder does.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .hypergraph import DimensionError, Forest, HyperEdge, Hypergraph, derivation_yield
from .metrics import corpus_bleu_of

log = logging.getLogger(__name__)

FEATURE_BOUND = 5.0
MAX_ADJUST_ATTEMPTS = 100


class InfeasibleTaskError(RuntimeError):
    pass


@dataclass(frozen=True)
class NBestList:
    """Distinct translations of one sentence with their feature vectors, best first."""

    sentence_id: int
    hypotheses: tuple[tuple[tuple[str, ...], dict], ...]

    def __post_init__(self):
        if not self.hypotheses:
            raise ValueError(f"sentence {self.sentence_id}: empty n-best list")

    def __len__(self) -> int:
        return len(self.hypotheses)


@dataclass(eq=False)
class SyntheticTask:
    master_graphs: list[Hypergraph]
    references: list[tuple[str, ...]]
    num_features: int
    beam: int
    true_weights: np.ndarray | None = None
    test_graphs: list[Hypergraph] = field(default_factory=list)
    test_references: list[tuple[str, ...]] = field(default_factory=list)
    core_dims: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.num_features

    @property
    def sparse_dims(self) -> int:
        return self.num_features - (self.core_dims if self.core_dims is not None else self.num_features)

    @cached_property
    def master_forest(self) -> Forest:
        return Forest(self.master_graphs, self.num_features)

    @cached_property
    def test_forest(self) -> Forest:
        return Forest(self.test_graphs, self.num_features)

    def _forest(self, split: str) -> Forest:
        if split == "dev":
            return self.master_forest
        if split == "test":
            return self.test_forest
        raise ValueError(f"unknown split {split!r}")

    def refs(self, split: str = "dev") -> list[tuple[str, ...]]:
        return self.references if split == "dev" else self.test_references

    def decode(self, w, split: str = "dev") -> list[Hypergraph]:
        return simulated_decode(self, w, split)

    def decode_nbest(self, w, n: int, split: str = "dev") -> list[NBestList]:
        return [kbest_nbest(g, w, n) for g in self.decode(w, split)]

    def translate(self, w, split: str = "dev") -> list[tuple[str, ...]]:
        """1-best output of the decoder (beam pruning never removes the Viterbi edge)."""
        forest = self._forest(split)
        _, best = forest.inside(w)
        return [derivation_yield(g, forest.local_best(s, best)) for s, g in enumerate(forest.graphs)]

    def bleu(self, w, split: str = "dev") -> float:
        return corpus_bleu_of(self.translate(w, split), self.refs(split))


def oracle_bleu(task: SyntheticTask, split: str = "dev") -> float:
    """Corpus BLEU of decoding with the planted weights."""
    if task.true_weights is None:
        raise ValueError("task carries no planted weights")
    graphs = simulated_decode(task, task.true_weights, split)
    forest = Forest(graphs, task.num_features)
    _, best = forest.inside(task.true_weights)
    hyps = [derivation_yield(g, forest.local_best(s, best)) for s, g in enumerate(graphs)]
    return corpus_bleu_of(hyps, task.refs(split))


# ---------------------------------------------------------------------------
# decoding


def _prune_forest(forest: Forest, w: np.ndarray, beam: int) -> np.ndarray:
    """Mask of edges kept by per-node beam pruning, dead nodes removed."""
    inside, _ = forest.inside(w)
    es = forest.features @ w
    val = es + inside[forest.tail[:, 0]] + inside[forest.tail[:, 1]]
    n_e = val.size
    order = np.lexsort((np.arange(n_e), -val, forest.head))
    h = forest.head[order]
    starts = np.flatnonzero(np.r_[True, h[1:] != h[:-1]])
    rank = np.arange(n_e) - np.repeat(starts, np.diff(np.r_[starts, n_e]))
    keep = np.zeros(n_e, dtype=bool)
    keep[order[rank < beam]] = True
    reach = np.zeros(forest.num_nodes + 1, dtype=bool)
    reach[forest.goals] = True
    for idx, _, _, _, _ in forest.schedule_desc:
        e = idx[keep[idx] & reach[forest.head[idx]]]
        reach[forest.tail[e, 0]] = True
        reach[forest.tail[e, 1]] = True
    return keep & reach[forest.head]


def _subgraph(g: Hypergraph, keep: np.ndarray) -> Hypergraph:
    used = np.zeros(g.num_nodes, dtype=bool)
    kept = [e for e, k in zip(g.edges, keep) if k]
    for e in kept:
        used[e.head] = True
    new_id = np.cumsum(used) - 1
    edges = tuple(
        HyperEdge(int(new_id[e.head]), tuple(int(new_id[t]) for t in e.tails), e.features, e.yield_template)
        for e in kept
    )
    return Hypergraph(int(used.sum()), edges, g.num_features, g.sentence_id)


def simulated_decode(task: SyntheticTask, w, split: str = "dev") -> list[Hypergraph]:
    """Beam-prune every master graph under ``w``: the decoder's output forests."""
    w = np.asarray(w, dtype=float)
    if w.shape != (task.num_features,):
        raise DimensionError(f"weights of shape {w.shape}, task has K={task.num_features}")
    forest = task._forest(split)
    keep = _prune_forest(forest, w, task.beam)
    out = []
    for s, g in enumerate(forest.graphs):
        sl = keep[int(forest.edge_offset[s]):int(forest.edge_offset[s + 1])]
        out.append(_subgraph(g, sl).validate())
    return out


def kbest_derivations(hg: Hypergraph, w, k: int) -> list[tuple[float, tuple[str, ...], dict]]:
    """The ``k`` best derivations as (score, yield, features), best first.

    Lazy frontier enumeration per node; exact because scores are additive.
    """
    w = np.asarray(w, dtype=float)
    edges = hg.edges
    es = [e.score(w) for e in edges]
    inc = hg.incoming()
    lists: list[list[tuple[float, int, tuple[int, ...]]]] = [[] for _ in range(hg.num_nodes)]

    def item_score(ei, ranks):
        s = es[ei]
        for t, r in zip(edges[ei].tails, ranks):
            s += lists[t][r][0]
        return s

    for v in range(hg.num_nodes):
        heap = []
        seen = set()
        for ei in inc[v]:
            ranks = (0,) * len(edges[ei].tails)
            heap.append((-item_score(ei, ranks), ei, ranks))
            seen.add((ei, ranks))
        heapq.heapify(heap)
        out = lists[v]
        while heap and len(out) < k:
            neg, ei, ranks = heapq.heappop(heap)
            out.append((-neg, ei, ranks))
            tails = edges[ei].tails
            for j in range(len(ranks)):
                r2 = ranks[:j] + (ranks[j] + 1,) + ranks[j + 1:]
                if r2[j] < len(lists[tails[j]]) and (ei, r2) not in seen:
                    seen.add((ei, r2))
                    heapq.heappush(heap, (-item_score(ei, r2), ei, r2))

    memo: dict[tuple[int, int], tuple[tuple[str, ...], dict]] = {}

    def expand(v, r):
        key = (v, r)
        if key in memo:
            return memo[key]
        _, ei, ranks = lists[v][r]
        e = edges[ei]
        subs = [expand(t, rr) for t, rr in zip(e.tails, ranks)]
        toks: list[str] = []
        for item in e.yield_template:
            if isinstance(item, int):
                toks.extend(subs[item][0])
            else:
                toks.append(item)
        feats = dict(e.features)
        for _, f in subs:
            for kk, val in f.items():
                feats[kk] = feats.get(kk, 0.0) + val
        memo[key] = (tuple(toks), feats)
        return memo[key]

    goal = hg.goal
    return [(s, *expand(goal, r)) for r, (s, _, _) in enumerate(lists[goal])]


def kbest_nbest(hg: Hypergraph, w, n: int) -> NBestList:
    """N-best list of distinct strings (first occurrence of each yield kept)."""
    seen = set()
    hyps = []
    for _, toks, feats in kbest_derivations(hg, w, n):
        if toks in seen:
            continue
        seen.add(toks)
        hyps.append((toks, feats))
    return NBestList(hg.sentence_id, tuple(hyps))


# ---------------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class _Spec:
    K: int
    sparse_dims: int
    vocab: tuple[str, ...]
    depth: int
    fanout: int
    margin: float
    density: float
    sparse_rate: float
    sparse_node_rate: float
    true_sparse: tuple[int, ...]
    feature_scale: float


def _random_core(rng, spec: _Spec) -> dict[int, float]:
    mask = rng.random(spec.K) < spec.density
    vals = np.clip(spec.feature_scale * rng.normal(size=spec.K), -FEATURE_BOUND, FEATURE_BOUND)
    return {int(k): float(vals[k]) for k in np.flatnonzero(mask)}


def _random_features(rng, spec: _Spec) -> dict[int, float]:
    f = _random_core(rng, spec)
    if spec.sparse_dims and rng.random() < spec.sparse_rate:
        f[spec.K + int(rng.integers(spec.sparse_dims))] = 1.0
    return f


def _score(f: dict[int, float], w: np.ndarray) -> float:
    return float(sum(v * w[k] for k, v in f.items()))


def _shift(f: dict[int, float], direction: np.ndarray, amount: float, dims) -> dict[int, float]:
    """Move the core features so their score along ``direction`` rises by ``amount``."""
    g = dict(f)
    step = amount * direction / float(direction @ direction)
    for k in dims:
        v = g.get(k, 0.0) + float(step[k])
        g[k] = float(np.clip(v, -FEATURE_BOUND, FEATURE_BOUND))
    return g


def _plant_node(rng, spec: _Spec, w_star: np.ndarray, planted: dict, others: list[dict], redraw) -> tuple[dict, list[dict]]:
    """Adjust features so the planted edge wins by ``margin`` under ``w_star``."""
    K = spec.K
    core_dir = np.zeros_like(w_star)
    core_dir[:K] = w_star[:K]
    use_sparse = bool(spec.sparse_dims) and rng.random() < spec.sparse_node_rate
    for _ in range(MAX_ADJUST_ATTEMPTS):
        extra = float(rng.uniform(0.0, 0.5 * spec.margin))
        f = dict(planted)
        if use_sparse:
            # core features alone leave the planted edge behind; a true sparse
            # feature closes the gap
            best_core = max(_score({k: v for k, v in o.items() if k < K}, core_dir) for o in others)
            lag = float(rng.uniform(0.1, 0.5))
            f = {k: v for k, v in f.items() if k < K}
            f = _shift(f, core_dir, best_core - lag - _score(f, core_dir), range(K))
            j = spec.true_sparse[int(rng.integers(len(spec.true_sparse)))]
            need = max(_score(o, w_star) for o in others) + spec.margin + extra - _score(f, w_star)
            f[j] = float(need / w_star[j])
        else:
            deficit = max(_score(o, w_star) for o in others) + spec.margin + extra - _score(f, w_star)
            if deficit > 0:
                f = _shift(f, core_dir, deficit, range(K))
        ok = all(abs(v) <= FEATURE_BOUND for v in f.values())
        ok = ok and _score(f, w_star) >= max(_score(o, w_star) for o in others) + spec.margin - 1e-9
        if ok:
            return f, others
        others = [redraw() for _ in others]
    raise InfeasibleTaskError("could not plant a margin at a node")


def _leaf_yields(rng, spec: _Spec, ref_tok: str) -> list[tuple[str, ...]]:
    out = []
    while len(out) < spec.fanout - 1:
        u = rng.random()
        if u < 0.7:
            y = (spec.vocab[int(rng.integers(len(spec.vocab)))],)
        elif u < 0.85:
            y = tuple(spec.vocab[int(i)] for i in rng.integers(len(spec.vocab), size=2))
        else:
            y = ()
        if y != (ref_tok,) and y not in out:
            out.append(y)
    return out


def _internal_templates(rng, spec: _Spec) -> list[tuple]:
    v = spec.vocab
    t = lambda: v[int(rng.integers(len(v)))]
    pool = [(1, 0), (0, t(), 1), (1, t(), 0), (t(), 0, 1), (0, 1, t()), (1, 0, t()), (t(), 1, 0)]
    idx = rng.permutation(len(pool))[: spec.fanout - 1]
    return [pool[i] for i in sorted(idx)]


def _make_sentence(rng, spec: _Spec, w_star: np.ndarray, sid: int) -> tuple[Hypergraph, tuple[str, ...]]:
    V = len(spec.vocab)
    redraw = lambda: _random_features(rng, spec)
    if spec.depth == 1:
        n = int(rng.integers(4, 9))
        ref = tuple(spec.vocab[int(i)] for i in rng.integers(V, size=n))
        e = HyperEdge(0, (), _random_features(rng, spec), ref)
        return Hypergraph(1, (e,), spec.K + spec.sparse_dims, sid).validate(), ref

    lo, hi = 2 ** (spec.depth - 2) + 1, 2 ** (spec.depth - 1)
    n = int(rng.integers(lo, hi + 1))
    ref = tuple(spec.vocab[int(i)] for i in rng.integers(V, size=n))
    edges: list[HyperEdge] = []
    next_id = 0

    def add_node(alternatives: list[tuple[tuple, tuple]], planted_tmpl: tuple, tails: tuple) -> int:
        nonlocal next_id
        node = next_id
        next_id += 1
        others = [redraw() for _ in alternatives]
        planted, others = _plant_node(rng, spec, w_star, redraw(), others, redraw)
        items = [(planted_tmpl, planted)] + [(tm, f) for tm, f in zip(alternatives, others)]
        for j in rng.permutation(len(items)):
            tm, f = items[j]
            edges.append(HyperEdge(node, tails, f, tm))
        return node

    layer = []
    for i in range(n):
        layer.append(add_node(_leaf_yields(rng, spec, ref[i]), (ref[i],), ()))
    while len(layer) > 1:
        nxt = []
        for a in range(0, len(layer) - 1, 2):
            tails = (layer[a], layer[a + 1])
            nxt.append(add_node(_internal_templates(rng, spec), (0, 1), tails))
        if len(layer) % 2:
            nxt.append(layer[-1])
        layer = nxt
    return Hypergraph(next_id, tuple(edges), spec.K + spec.sparse_dims, sid).validate(), ref


def generate_task(
    num_sentences: int = 50,
    K: int = 18,
    vocab_size: int = 50,
    depth: int = 6,
    seed: int = 0,
    *,
    beam: int = 4,
    num_test: int = 0,
    fanout: int = 6,
    margin: float = 0.5,
    density: float = 0.5,
    sparse_dims: int = 0,
    sparse_active: int = 5,
    sparse_rate: float = 0.5,
    sparse_node_rate: float = 0.05,
    feature_scale: float = 0.5,
) -> SyntheticTask:
    """Random task with planted weights ``w*`` under which decoding yields the references.

    With ``sparse_dims = h > 0`` the weight vector gets ``h`` indicator
    features after the ``K`` core ones; only ``sparse_active`` of them carry
    nonzero true weight, and a fraction of nodes needs them to win.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    if min(num_sentences, vocab_size, depth, beam, fanout) < 1:
        raise ValueError("sizes must be positive")
    if sparse_dims and not 1 <= sparse_active <= sparse_dims:
        raise ValueError("sparse_active must lie in [1, sparse_dims]")
    for offset in range(10):
        try:
            return _generate(num_sentences, K, vocab_size, depth, seed, offset, beam, num_test, fanout,
                             margin, density, sparse_dims, sparse_active, sparse_rate, sparse_node_rate,
                             feature_scale)
        except InfeasibleTaskError as err:
            log.warning("seed %d offset %d: %s; regenerating", seed, offset, err)
    raise InfeasibleTaskError(f"seed {seed}: no feasible task after 10 regenerations")


def _generate(num_sentences, K, vocab_size, depth, seed, offset, beam, num_test, fanout,
              margin, density, sparse_dims, sparse_active, sparse_rate, sparse_node_rate,
              feature_scale) -> SyntheticTask:
    rng = np.random.default_rng([seed, offset])
    w_core = rng.normal(size=K)
    w_star = np.zeros(K + sparse_dims)
    w_star[:K] = w_core
    true_sparse: tuple[int, ...] = ()
    if sparse_dims:
        picks = rng.choice(sparse_dims, size=sparse_active, replace=False)
        true_sparse = tuple(int(K + p) for p in sorted(picks))
        signs = rng.choice([-1.0, 1.0], size=sparse_active)
        w_star[list(true_sparse)] = signs * rng.uniform(0.5, 1.0, size=sparse_active)
    spec = _Spec(
        K=K, sparse_dims=sparse_dims, vocab=tuple(f"w{i}" for i in range(vocab_size)), depth=depth,
        fanout=fanout, margin=margin, density=density, sparse_rate=sparse_rate,
        sparse_node_rate=sparse_node_rate, true_sparse=true_sparse, feature_scale=feature_scale,
    )
    dev, dev_refs, test, test_refs = [], [], [], []
    for s in range(num_sentences):
        g, r = _make_sentence(rng, spec, w_star, s)
        dev.append(g)
        dev_refs.append(r)
    for s in range(num_test):
        g, r = _make_sentence(rng, spec, w_star, s)
        test.append(g)
        test_refs.append(r)
    meta = {
        "seed": seed, "offset": offset, "sentences": num_sentences, "test_sentences": num_test,
        "features": K, "sparse_dims": sparse_dims, "sparse_active": sparse_active,
        "vocab": vocab_size, "depth": depth, "beam": beam, "fanout": fanout, "margin": margin,
        "feature_scale": feature_scale,
    }
    return SyntheticTask(
        master_graphs=dev, references=dev_refs, num_features=K + sparse_dims, beam=beam,
        true_weights=w_star, test_graphs=test, test_references=test_refs,
        core_dims=K, meta=meta,
    )


def perturbed_start(task: SyntheticTask, radius: float = 0.3, seed: int = 0) -> np.ndarray:
    """Start weights with ``||w0 - w*||_inf == radius`` on the core block, sparse block zero."""
    rng = np.random.default_rng([seed, 7919])
    K = task.core_dims if task.core_dims is not None else task.num_features
    w0 = np.zeros(task.num_features)
    w0[:K] = task.true_weights[:K] + radius * rng.choice([-1.0, 1.0], size=K)
    return w0


def true_sparse_dims(task: SyntheticTask) -> list[int]:
    K = task.core_dims if task.core_dims is not None else task.num_features
    return [int(k) for k in np.flatnonzero(task.true_weights[K:]) + K]
