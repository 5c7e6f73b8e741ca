"""Translation hypergraphs: representation, Viterbi search and union.

A hypergraph stores nodes ``0 .. num_nodes - 1`` in topological order with
the goal node last. Each hyperedge has a head, up to two tail nodes, a sparse
feature vector and a yield template mixing terminal strings with integer
tail slots. Scoring a derivation is a dot product between its summed features
and a weight vector.

Batch evaluation goes through :class:`Forest`, which concatenates many graphs
and runs the max-sum recursion level by level with numpy.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp


class HypergraphError(ValueError):
    """Raised when a hypergraph violates a structural invariant."""


class DimensionError(ValueError):
    """Raised when weights and feature indices disagree on dimension."""


class AlignmentError(ValueError):
    """Raised when per-sentence lists are not aligned by sentence id."""


MAX_TAILS = 2


@dataclass(frozen=True, eq=False)
class HyperEdge:
    head: int
    tails: tuple[int, ...]
    features: Mapping[int, float]
    yield_template: tuple[str | int, ...]

    def score(self, w: np.ndarray) -> float:
        return float(sum(v * w[k] for k, v in self.features.items()))


@dataclass(frozen=True, eq=False)
class Hypergraph:
    num_nodes: int
    edges: tuple[HyperEdge, ...]
    num_features: int
    sentence_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))

    @property
    def nodes(self) -> range:
        return range(self.num_nodes)

    @property
    def goal(self) -> int:
        return self.num_nodes - 1

    def incoming(self) -> list[list[int]]:
        inc: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for i, e in enumerate(self.edges):
            inc[e.head].append(i)
        return inc

    def validate(self) -> "Hypergraph":
        """Check every structural invariant; return self for chaining."""
        n = self.num_nodes
        if n < 1:
            raise HypergraphError("hypergraph has no nodes")
        has_in = [False] * n
        has_out = [False] * n
        for i, e in enumerate(self.edges):
            if not 0 <= e.head < n:
                raise HypergraphError(f"edge {i}: head {e.head} out of range")
            if len(e.tails) > MAX_TAILS:
                raise HypergraphError(f"edge {i}: {len(e.tails)} tails (max {MAX_TAILS})")
            for t in e.tails:
                if not 0 <= t < e.head:
                    raise HypergraphError(
                        f"edge {i}: tail {t} does not precede head {e.head}"
                    )
                has_out[t] = True
            has_in[e.head] = True
            for k in e.features:
                if not 0 <= k < self.num_features:
                    raise DimensionError(
                        f"edge {i}: feature index {k} outside [0, {self.num_features})"
                    )
            slots = sorted(s for s in e.yield_template if isinstance(s, int))
            if slots != list(range(len(e.tails))):
                raise HypergraphError(
                    f"edge {i}: yield template must use each tail slot exactly once"
                )
        for v in range(n):
            if not has_in[v]:
                raise HypergraphError(f"node {v} has no incoming edge")
        if has_out[n - 1]:
            raise HypergraphError("goal node has outgoing edges")
        # every node must reach the goal
        reach = [False] * n
        reach[n - 1] = True
        for e in sorted(self.edges, key=lambda e: -e.head):
            if reach[e.head]:
                for t in e.tails:
                    reach[t] = True
        dead = [v for v in range(n) if not reach[v]]
        if dead:
            raise HypergraphError(f"nodes {dead[:5]} do not reach the goal")
        return self


@dataclass(frozen=True, eq=False)
class Derivation:
    edges: tuple[int, ...]
    yield_: tuple[str, ...]
    features: dict[int, float]
    score: float

    @property
    def tokens(self) -> tuple[str, ...]:
        return self.yield_


def _check_weights(w, num_features: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.shape[0] != num_features:
        raise DimensionError(
            f"weight vector has shape {w.shape}, expected ({num_features},)"
        )
    if not np.all(np.isfinite(w)):
        raise ValueError("weight vector has non-finite entries")
    return w


def derivation_yield(hg: Hypergraph, best_edge: Sequence[int], node: int | None = None) -> tuple[str, ...]:
    """Materialize the target string of the derivation picked by ``best_edge``."""
    out: list[str] = []
    edges = hg.edges
    # explicit stack: (edge, position in template)
    stack = [(best_edge[hg.goal if node is None else node], 0)]
    while stack:
        ei, pos = stack.pop()
        tmpl = edges[ei].yield_template
        while pos < len(tmpl):
            item = tmpl[pos]
            pos += 1
            if isinstance(item, int):
                stack.append((ei, pos))
                stack.append((best_edge[edges[ei].tails[item]], 0))
                break
            out.append(item)
    return tuple(out)


def _derivation_from_backpointers(hg: Hypergraph, best_edge: Sequence[int], score: float) -> Derivation:
    chosen = []
    feats: dict[int, float] = {}
    todo = [hg.goal]
    while todo:
        v = todo.pop()
        ei = best_edge[v]
        chosen.append(ei)
        for k, val in hg.edges[ei].features.items():
            feats[k] = feats.get(k, 0.0) + val
        todo.extend(reversed(hg.edges[ei].tails))
    return Derivation(
        edges=tuple(chosen),
        yield_=derivation_yield(hg, best_edge),
        features=feats,
        score=score,
    )


class Forest:
    """Several hypergraphs compiled into flat arrays for repeated rescoring.

    Graphs keep their own node numbering internally; globally node ``v`` of
    graph ``s`` becomes ``node_offset[s] + v``. Slot ``num_nodes`` is a
    sentinel with inside score 0 used for missing tails.
    """

    def __init__(self, graphs: Sequence[Hypergraph], num_features: int | None = None):
        graphs = list(graphs)
        if num_features is None:
            num_features = graphs[0].num_features if graphs else 0
        for g in graphs:
            if g.num_features != num_features:
                raise DimensionError(
                    f"graph {g.sentence_id} has K={g.num_features}, expected {num_features}"
                )
        self.graphs = graphs
        self.num_features = num_features
        node_off = np.zeros(len(graphs) + 1, dtype=np.int64)
        edge_off = np.zeros(len(graphs) + 1, dtype=np.int64)
        for s, g in enumerate(graphs):
            node_off[s + 1] = node_off[s] + g.num_nodes
            edge_off[s + 1] = edge_off[s] + len(g.edges)
        self.node_offset = node_off
        self.edge_offset = edge_off
        n_nodes = int(node_off[-1])
        n_edges = int(edge_off[-1])
        self.num_nodes = n_nodes
        sentinel = n_nodes

        head = np.empty(n_edges, dtype=np.int64)
        tail = np.full((n_edges, MAX_TAILS), sentinel, dtype=np.int64)
        rows, cols, vals = [], [], []
        level = np.zeros(n_nodes + 1, dtype=np.int64)
        for s, g in enumerate(graphs):
            no, eo = int(node_off[s]), int(edge_off[s])
            glevel = [0] * g.num_nodes
            for i, e in enumerate(g.edges):
                head[eo + i] = no + e.head
                for j, t in enumerate(e.tails):
                    tail[eo + i, j] = no + t
                for k, v in e.features.items():
                    rows.append(eo + i)
                    cols.append(k)
                    vals.append(v)
            for e in sorted(g.edges, key=lambda e: e.head):
                if e.tails:
                    glevel[e.head] = max(glevel[e.head], 1 + max(glevel[t] for t in e.tails))
            level[no:no + g.num_nodes] = glevel
        self.head = head
        self.tail = tail
        self.features = sp.csr_matrix(
            (np.asarray(vals, dtype=float), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
            shape=(n_edges, num_features),
        )
        self.goals = node_off[1:] - 1

        # per level: edges sorted by (head, edge id) with segment starts
        edge_level = level[head] if n_edges else np.zeros(0, dtype=np.int64)
        order = np.lexsort((np.arange(n_edges), head, edge_level))
        self.schedule = []
        max_level = int(edge_level.max()) if n_edges else -1
        bounds = np.searchsorted(edge_level[order], np.arange(max_level + 2))
        for lv in range(max_level + 1):
            idx = order[bounds[lv]:bounds[lv + 1]]
            if idx.size == 0:
                continue
            h = head[idx]
            starts = np.flatnonzero(np.r_[True, h[1:] != h[:-1]])
            self.schedule.append((idx, tail[idx, 0], tail[idx, 1], starts, h[starts]))
        self.schedule_desc = list(reversed(self.schedule))
        self.node_sentence = np.repeat(np.arange(len(graphs)), np.diff(node_off))

    def __len__(self) -> int:
        return len(self.graphs)

    def inside(self, w) -> tuple[np.ndarray, np.ndarray]:
        """Viterbi inside scores and best incoming edge (global ids) per node."""
        w = _check_weights(w, self.num_features)
        es = self.features @ w
        inside = np.zeros(self.num_nodes + 1)
        best = np.full(self.num_nodes + 1, -1, dtype=np.int64)
        for idx, t0, t1, starts, heads in self.schedule:
            val = es[idx] + inside[t0] + inside[t1]
            seg_max = np.maximum.reduceat(val, starts)
            counts = np.diff(np.r_[starts, val.size])
            hit = val == np.repeat(seg_max, counts)
            pos = np.where(hit, np.arange(val.size), val.size)
            first = np.minimum.reduceat(pos, starts)
            inside[heads] = seg_max
            best[heads] = idx[first]
        return inside, best

    def active_nodes(self, best: np.ndarray) -> np.ndarray:
        """Boolean mask of nodes used by the Viterbi derivations."""
        active = np.zeros(self.num_nodes + 1, dtype=bool)
        active[self.goals] = True
        for _, _, _, _, heads in self.schedule_desc:
            on = heads[active[heads]]
            if on.size:
                e = best[on]
                active[self.tail[e, 0]] = True
                active[self.tail[e, 1]] = True
        active[self.num_nodes] = False
        return active

    def local_best(self, s: int, best: np.ndarray) -> list[int]:
        no, eo = int(self.node_offset[s]), int(self.edge_offset[s])
        return (best[no:int(self.node_offset[s + 1])] - eo).tolist()

    def viterbi(self, w) -> list[Derivation]:
        inside, best = self.inside(w)
        out = []
        for s, g in enumerate(self.graphs):
            out.append(_derivation_from_backpointers(g, self.local_best(s, best), float(inside[self.goals[s]])))
        return out


def viterbi_best(hg: Hypergraph, w) -> Derivation:
    """Highest-scoring derivation of ``hg`` under weights ``w``.

    Ties are broken towards the lowest edge id at every node.
    """
    _check_weights(w, hg.num_features)
    return Forest([hg]).viterbi(w)[0]


def rescore_all(hgs: Sequence[Hypergraph], w) -> list[Derivation]:
    """Viterbi derivation for every graph, in input order."""
    if not hgs:
        return []
    k = hgs[0].num_features
    _check_weights(w, k)
    return Forest(hgs, k).viterbi(w)


def union_graph(a: Hypergraph, b: Hypergraph) -> Hypergraph:
    """Join two graphs of the same sentence under a fresh goal node."""
    if a.sentence_id != b.sentence_id:
        raise AlignmentError(f"sentence ids differ: {a.sentence_id} vs {b.sentence_id}")
    if a.num_features != b.num_features:
        raise DimensionError("graphs disagree on feature dimension")
    off = a.num_nodes
    goal = a.num_nodes + b.num_nodes
    edges = list(a.edges)
    edges += [
        HyperEdge(e.head + off, tuple(t + off for t in e.tails), e.features, e.yield_template)
        for e in b.edges
    ]
    edges.append(HyperEdge(goal, (a.goal,), {}, (0,)))
    edges.append(HyperEdge(goal, (b.goal + off,), {}, (0,)))
    return Hypergraph(goal + 1, tuple(edges), a.num_features, a.sentence_id)


def union_graphs(current: Sequence[Hypergraph], previous: Sequence[Hypergraph]) -> list[Hypergraph]:
    """Per-sentence union of two aligned graph lists.

    An empty ``previous`` returns ``current`` unchanged.
    """
    if not previous:
        return list(current)
    if len(current) != len(previous):
        raise AlignmentError(f"{len(current)} current graphs vs {len(previous)} previous")
    return [union_graph(c, p) for c, p in zip(current, previous)]


def count_derivations(hg: Hypergraph) -> int:
    counts = [0] * hg.num_nodes
    for e in sorted(hg.edges, key=lambda e: e.head):
        c = 1
        for t in e.tails:
            c *= counts[t]
        counts[e.head] += c
    return counts[hg.goal]


# ---------------------------------------------------------------------------
# file format

_SLOT = re.compile(r"^\[(\d+)\]$")


def _format_value(v: float) -> str:
    return repr(float(v))


def format_hypergraph(hg: Hypergraph) -> str:
    lines = [f"HG {hg.sentence_id} {hg.num_nodes} {len(hg.edges)} {hg.num_features}"]
    for e in hg.edges:
        tails = ",".join(str(t) for t in e.tails) or "-"
        tmpl = " ".join(f"[{x}]" if isinstance(x, int) else x for x in e.yield_template)
        feats = ",".join(f"{k}:{_format_value(v)}" for k, v in sorted(e.features.items())) or "-"
        parts = ["E", str(e.head), tails]
        if tmpl:
            parts.append(tmpl)
        parts.append(feats)
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def write_hypergraphs(path, graphs: Iterable[Hypergraph]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for g in graphs:
            f.write(format_hypergraph(g))


class ParseError(ValueError):
    def __init__(self, msg: str, path=None, lineno: int | None = None):
        loc = f"{path or '<input>'}:{lineno}: " if lineno is not None else ""
        super().__init__(loc + msg)
        self.lineno = lineno


def parse_hypergraphs(text: str, path=None) -> list[Hypergraph]:
    """Parse the line-oriented hypergraph format (one or more graphs)."""
    graphs: list[Hypergraph] = []
    header = None
    edges: list[HyperEdge] = []

    def close(lineno):
        sid, n, m, k = header
        if len(edges) != m:
            raise ParseError(f"graph {sid}: expected {m} edges, found {len(edges)}", path, lineno)
        try:
            graphs.append(Hypergraph(n, tuple(edges), k, sid).validate())
        except ValueError as err:
            raise ParseError(str(err), path, lineno) from err

    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts:
            continue
        try:
            if parts[0] == "HG":
                if header is not None:
                    close(lineno)
                if len(parts) != 5:
                    raise ValueError("header needs 4 fields")
                header = tuple(int(x) for x in parts[1:])
                edges = []
            elif parts[0] == "E":
                if header is None:
                    raise ValueError("edge line before HG header")
                if len(parts) < 4:
                    raise ValueError("edge line needs head, tails and features")
                head = int(parts[1])
                tails = () if parts[2] == "-" else tuple(int(t) for t in parts[2].split(","))
                tmpl: list[str | int] = []
                for tok in parts[3:-1]:
                    m = _SLOT.match(tok)
                    tmpl.append(int(m.group(1)) if m else tok)
                feats: dict[int, float] = {}
                if parts[-1] != "-":
                    for item in parts[-1].split(","):
                        k, v = item.split(":")
                        feats[int(k)] = float(v)
                edges.append(HyperEdge(head, tails, feats, tuple(tmpl)))
            else:
                raise ValueError(f"unknown record type {parts[0]!r}")
        except ParseError:
            raise
        except ValueError as err:
            raise ParseError(str(err), path, lineno) from err
    if header is not None:
        close(None)
    return graphs


def read_hypergraphs(path) -> list[Hypergraph]:
    with open(path, encoding="utf-8") as f:
        return parse_hypergraphs(f.read(), path)
