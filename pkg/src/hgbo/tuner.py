"""Bayesian-optimisation tuning of linear model weights (NBL-BO, HG-BO, CHG-BO).

The outer loop decodes candidate sets (pruned hypergraphs or N-best lists)
with the incumbent weights, places a box of half-width ``b`` around them and
runs a GP/EI inner loop whose objective is corpus BLEU of the argmax
translations over the *fixed* candidate set. The best inner point becomes the
next incumbent.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import qmc

from . import surrogate
from .hypergraph import DimensionError, Forest, Hypergraph, derivation_yield, union_graphs
from .metrics import BleuStats, bleu_from_array, corpus_bleu, sentence_stats
from .simulator import NBestList

log = logging.getLogger(__name__)

VARIANTS = ("NBL", "HG", "CHG")


class TuningAborted(RuntimeError):
    """Decoding failed mid-run; ``record`` holds the iterations completed so far."""

    def __init__(self, msg: str, record: "RunRecord"):
        super().__init__(msg)
        self.record = record


@dataclass(frozen=True)
class SearchBound:
    center: np.ndarray
    half_width: float

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("bound half-width must be positive")

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.half_width

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.half_width

    def contains(self, x, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(np.asarray(x) - self.center)) <= self.half_width + tol)


@dataclass
class TunerConfig:
    variant: str = "HG"
    bound_b: float = 0.1
    inner_iters: int = 100
    outer_iters: int = 10
    init_samples: int = 10
    candidate_pool: int = 2000
    seed: int = 0
    nbest_size: int = 100
    gp_restarts: int = 8
    # full multi-start refit every this many inner rounds; warm-started single
    # local search in between
    gp_refit_every: int = 10
    tol: float = 0.0005
    patience: int = 2

    def __post_init__(self):
        self.variant = self.variant.upper()
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.inner_iters < 0 or self.outer_iters < 1 or self.init_samples < 1:
            raise ValueError("iteration counts out of range")
        if not self.bound_b > 0:
            raise ValueError(f"bound_b must be positive, got {self.bound_b}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class IterationRecord:
    iteration: int
    weights: list[float]
    dev_bleu: float
    bo_score: float | None = None
    best_x: list[float] | None = None
    inner_trace: list[float] = field(default_factory=list)
    candidates: int = 0
    gp: dict | None = None
    stage: str = ""
    wall_time: float = 0.0

    def to_dict(self, timing: bool = False) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return d


@dataclass
class RunRecord:
    variant: str
    iterations: list[IterationRecord] = field(default_factory=list)
    final_weights: list[float] | None = None
    final_dev_bleu: float | None = None
    decodes: int = 0
    extra: dict = field(default_factory=dict)
    candidate_sets: list = field(default_factory=list, repr=False)

    @property
    def dev_trace(self) -> list[float]:
        return [it.dev_bleu for it in self.iterations]

    @property
    def bo_trace(self) -> list[float | None]:
        return [it.bo_score for it in self.iterations]

    def to_dict(self, timing: bool = False) -> dict:
        return {
            "variant": self.variant,
            "decodes": self.decodes,
            "final_dev_bleu": self.final_dev_bleu,
            "final_weights": self.final_weights,
            "iterations": [it.to_dict(timing) for it in self.iterations],
            "extra": self.extra,
        }


class DecodableTask(Protocol):
    num_features: int
    references: list

    def decode(self, w) -> list[Hypergraph]: ...

    def decode_nbest(self, w, n: int) -> list[NBestList]: ...

    def translate(self, w) -> list[tuple[str, ...]]: ...


# ---------------------------------------------------------------------------
# candidate sets and the approximate objective


class HypergraphCandidates:
    """Fixed hypergraphs plus references; BLEU of Viterbi translations under ``x``."""

    def __init__(self, graphs: Sequence[Hypergraph], refs: Sequence[Sequence[str]]):
        if len(graphs) != len(refs):
            raise ValueError(f"{len(graphs)} graphs vs {len(refs)} references")
        self.graphs = list(graphs)
        self.refs = [tuple(r) for r in refs]
        self.forest = Forest(self.graphs)
        self.num_features = self.forest.num_features
        self._sent_cache: list[dict[bytes, np.ndarray]] = [{} for _ in self.graphs]
        self._corpus_cache: dict[bytes, np.ndarray] = {}
        ends = self.forest.node_offset
        self._slices = [slice(int(ends[s]), int(ends[s + 1])) for s in range(len(self.graphs))]

    def stats(self, x) -> np.ndarray:
        f = self.forest
        _, best = f.inside(x)
        active = f.active_nodes(best)
        key_arr = np.where(active, best, -1)[:-1]
        ck = key_arr.tobytes()
        hit = self._corpus_cache.get(ck)
        if hit is not None:
            return hit
        total = np.zeros(10, dtype=np.int64)
        for s, sl in enumerate(self._slices):
            k = key_arr[sl].tobytes()
            st = self._sent_cache[s].get(k)
            if st is None:
                toks = derivation_yield(self.graphs[s], f.local_best(s, best))
                st = sentence_stats(toks, self.refs[s]).to_array()
                self._sent_cache[s][k] = st
            total += st
        self._corpus_cache[ck] = total
        return total

    def bleu(self, x) -> float:
        return bleu_from_array(self.stats(x))

    def size(self) -> int:
        return len(self.forest.head)


class NBestCandidates:
    """Fixed N-best lists; per-hypothesis BLEU statistics are precomputed."""

    def __init__(self, nbests: Sequence[NBestList], refs: Sequence[Sequence[str]], num_features: int):
        if len(nbests) != len(refs):
            raise ValueError(f"{len(nbests)} n-best lists vs {len(refs)} references")
        self.nbests = list(nbests)
        self.num_features = num_features
        rows, cols, vals, stats, seg = [], [], [], [], [0]
        r = 0
        for nb, ref in zip(self.nbests, refs):
            for toks, feats in nb.hypotheses:
                for k, v in feats.items():
                    if not 0 <= k < num_features:
                        raise DimensionError(f"feature index {k} outside [0, {num_features})")
                    rows.append(r)
                    cols.append(k)
                    vals.append(v)
                stats.append(sentence_stats(toks, ref).to_array())
                r += 1
            seg.append(r)
        self.features = sp.csr_matrix((vals, (rows, cols)), shape=(r, num_features))
        self.hyp_stats = np.array(stats, dtype=np.int64).reshape(r, 10)
        self.starts = np.asarray(seg[:-1], dtype=np.int64)
        self.counts = np.diff(seg)

    def choose(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.num_features,):
            raise DimensionError(f"weights of shape {x.shape}, expected ({self.num_features},)")
        sc = self.features @ x
        seg_max = np.maximum.reduceat(sc, self.starts)
        hit = sc == np.repeat(seg_max, self.counts)
        pos = np.where(hit, np.arange(sc.size), sc.size)
        return np.minimum.reduceat(pos, self.starts)

    def stats(self, x) -> np.ndarray:
        return self.hyp_stats[self.choose(x)].sum(0)

    def bleu(self, x) -> float:
        return bleu_from_array(self.stats(x))

    def size(self) -> int:
        return int(self.hyp_stats.shape[0])


def compile_candidates(candidates, refs, num_features: int | None = None):
    if isinstance(candidates, (HypergraphCandidates, NBestCandidates)):
        return candidates
    candidates = list(candidates)
    if candidates and isinstance(candidates[0], NBestList):
        if num_features is None:
            num_features = 1 + max((k for nb in candidates for _, f in nb.hypotheses for k in f), default=0)
        return NBestCandidates(candidates, refs, num_features)
    return HypergraphCandidates(candidates, refs)


def evaluate_point(x, candidates, refs=None) -> float:
    """Corpus BLEU of the per-sentence argmax under ``x`` over a fixed candidate set."""
    x = np.asarray(x, dtype=float)
    c = compile_candidates(candidates, refs, num_features=x.shape[0])
    return c.bleu(x)


# ---------------------------------------------------------------------------
# inner loop


@dataclass
class InnerResult:
    x_best: np.ndarray
    y_best: float
    xs: np.ndarray
    ys: np.ndarray
    coords: np.ndarray
    gp: dict | None = None
    fallbacks: int = 0

    @property
    def best_trace(self) -> np.ndarray:
        return np.maximum.accumulate(self.ys)


def bo_maximize(
    objective: Callable[[np.ndarray], float],
    center: np.ndarray,
    half_width: float,
    cfg: TunerConfig,
    rng: np.random.Generator,
    basis: np.ndarray | None = None,
    y_max: float | None = None,
) -> InnerResult:
    """GP/EI maximization over displacements ``d`` in ``[-b, b]^m``.

    The objective is evaluated at ``center + basis @ d`` (``basis`` defaults
    to the identity). The GP sees the displacements mapped to the unit box.
    ``y_max`` is a known upper bound of the objective: once reached, later
    rounds cannot change the (first-occurrence) argmax, so the loop stops.
    """
    center = np.asarray(center, dtype=float)
    m = center.shape[0] if basis is None else basis.shape[1]
    b = float(half_width)

    def to_x(u):
        d = (2.0 * u - 1.0) * b
        return center + (d if basis is None else basis @ d)

    us = [np.full(m, 0.5)]
    if cfg.init_samples > 1:
        lhs = qmc.LatinHypercube(d=m, seed=rng).random(cfg.init_samples - 1)
        us.extend(lhs)
    ys = [float(objective(to_x(u))) for u in us]

    hyper = None
    model = None
    fallbacks = 0
    for j in range(cfg.inner_iters):
        if y_max is not None and max(ys) >= y_max:
            break
        U = np.asarray(us)
        Y = np.asarray(ys)
        full = hyper is None or j % max(cfg.gp_refit_every, 1) == 0
        try:
            model = surrogate.fit(
                U, Y, restarts=cfg.gp_restarts if full else 1, rng=rng, init=hyper,
                maxiter=200 if full else 50,
            )
            hyper = model.hyperparameters()
            pool = rng.random((cfg.candidate_pool, m))
            mean, var = surrogate.predict_many(model, pool)
            ei = surrogate.ei_array(mean, var, float(Y.max()))
            u_next = pool[int(np.argmax(ei))]
        except np.linalg.LinAlgError as err:
            log.warning("GP fit failed at inner round %d (%s); sampling uniformly", j, err)
            fallbacks += 1
            u_next = rng.random(m)
        us.append(u_next)
        ys.append(float(objective(to_x(u_next))))

    U = np.asarray(us)
    Y = np.asarray(ys)
    i = int(np.argmax(Y))
    xs = np.array([to_x(u) for u in U])
    return InnerResult(
        x_best=xs[i], y_best=float(Y[i]), xs=xs, ys=Y,
        coords=(2.0 * U - 1.0) * b, gp=hyper, fallbacks=fallbacks,
    )


def inner_bo_loop(candidates, bound: SearchBound, cfg: TunerConfig, refs=None, rng=None, basis=None) -> InnerResult:
    """Bounded GP/EI search around ``bound.center``.

    ``candidates`` is a fixed candidate set (hypergraphs or N-best lists, with
    ``refs``) or any callable mapping weights to a score to maximize.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if callable(candidates) and not isinstance(candidates, (list, tuple)):
        objective = candidates
    else:
        comp = compile_candidates(candidates, refs, num_features=len(bound.center))
        objective = comp.bleu
    return bo_maximize(objective, bound.center, bound.half_width, cfg, rng, basis)


# ---------------------------------------------------------------------------
# outer loop


def _decode_candidates(task, w, cfg: TunerConfig, previous):
    if cfg.variant == "NBL":
        raw = task.decode_nbest(w, cfg.nbest_size)
        return raw, NBestCandidates(raw, task.references, task.num_features), raw
    raw = task.decode(w)
    graphs = union_graphs(raw, previous) if cfg.variant == "CHG" and previous else raw
    return raw, HypergraphCandidates(graphs, task.references), graphs


def outer_loop(
    task: DecodableTask,
    cfg: TunerConfig,
    w0,
    *,
    basis: np.ndarray | None = None,
    keep_candidates: bool = False,
    stage: str = "",
    record: RunRecord | None = None,
) -> tuple[np.ndarray, RunRecord]:
    """Decode, search a box around the incumbent, move to the best point, repeat.

    Returns the weights with the highest decoded dev BLEU seen. With ``basis``
    (K x m) the search runs over ``w_i + basis @ d``, ``d`` in ``[-b, b]^m``.
    """
    w = np.asarray(w0, dtype=float).copy()
    if w.shape != (task.num_features,):
        raise DimensionError(f"w0 has shape {w.shape}, task has K={task.num_features}")
    record = record if record is not None else RunRecord(cfg.variant)
    best_w, best_dev = w.copy(), -math.inf
    previous = None
    stale = 0
    converged = False
    offset = len(record.iterations)
    for i in range(cfg.outer_iters):
        t0 = time.perf_counter()
        try:
            raw, cands, shown = _decode_candidates(task, w, cfg, previous)
        except Exception as err:
            raise TuningAborted(f"decode failed at outer iteration {i}: {err}", record) from err
        record.decodes += 1
        previous = raw
        if keep_candidates:
            record.candidate_sets.append(shown)
        dev = float(_dev_bleu(task, w))
        if i > 0 and dev - best_dev < cfg.tol:
            stale += 1
        else:
            stale = 0
        if dev > best_dev:
            best_w, best_dev = w.copy(), dev
        it = IterationRecord(
            iteration=offset + i, weights=w.tolist(), dev_bleu=dev,
            candidates=cands.size(), stage=stage,
        )
        record.iterations.append(it)
        if stale >= cfg.patience:
            converged = True
            it.wall_time = time.perf_counter() - t0
            break
        rng = np.random.default_rng([cfg.seed, offset + i])
        res = bo_maximize(cands.bleu, w, cfg.bound_b, cfg, rng, basis, y_max=1.0)
        it.bo_score = res.y_best
        it.best_x = res.x_best.tolist()
        it.inner_trace = res.ys.tolist()
        it.gp = res.gp
        it.wall_time = time.perf_counter() - t0
        w = res.x_best
    if not converged:
        t0 = time.perf_counter()
        dev = float(_dev_bleu(task, w))
        record.iterations.append(IterationRecord(
            iteration=offset + cfg.outer_iters, weights=w.tolist(), dev_bleu=dev, stage=stage,
            wall_time=time.perf_counter() - t0,
        ))
        if dev > best_dev:
            best_w, best_dev = w.copy(), dev
    record.final_weights = best_w.tolist()
    record.final_dev_bleu = best_dev
    return best_w, record


def _dev_bleu(task, w) -> float:
    from .metrics import corpus_bleu_of

    return corpus_bleu_of(task.translate(w), task.references)


# ---------------------------------------------------------------------------
# file formats shared with the MERT baseline


def format_weights(w, names: Sequence[str] | None = None) -> str:
    names = names or [f"F{k}" for k in range(len(w))]
    return "".join(f"{n} {float(v)!r}\n" for n, v in zip(names, w))


def write_weights(path, w, names=None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_weights(w, names))


def read_weights(path, num_features: int | None = None) -> np.ndarray:
    vals = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'name value'")
            vals.append(float(parts[1]))
    w = np.asarray(vals)
    if num_features is not None and w.shape[0] != num_features:
        raise DimensionError(f"{path}: {w.shape[0]} weights, expected {num_features}")
    return w


def format_nbest(nbests: Sequence[NBestList], w=None) -> str:
    lines = []
    for nb in nbests:
        for toks, feats in nb.hypotheses:
            fs = " ".join(f"{k}:{v!r}" for k, v in sorted(feats.items()))
            score = sum(v * w[k] for k, v in feats.items()) if w is not None else 0.0
            lines.append(f"{nb.sentence_id} ||| {' '.join(toks)} ||| {fs} ||| {score!r}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_nbest(text: str) -> list[NBestList]:
    groups: dict[int, list] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split("|||")]
        if len(fields) != 4:
            raise ValueError(f"line {lineno}: expected 4 '|||'-separated fields")
        sid = int(fields[0])
        feats = {}
        for item in fields[2].split():
            k, v = item.split(":")
            feats[int(k)] = float(v)
        groups.setdefault(sid, []).append((tuple(fields[1].split()), feats))
    return [NBestList(sid, tuple(h)) for sid, h in sorted(groups.items())]
