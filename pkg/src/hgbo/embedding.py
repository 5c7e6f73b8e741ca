"""Random embeddings for tuning large sparse feature blocks (HG-REMBO).

A random matrix ``A`` (h x l) with every row rescaled to unit L1 norm maps a
low-dimensional step ``z`` to a weight update ``A_reg @ z``. Because each row
has unit L1 norm, ``|(A_reg z)_m| <= ||z||_inf``: a box on ``z`` is also a
box on the weight update.

Tuning runs in two steps: the core block first with sparse weights held at
zero, then the sparse block in z-space with the core frozen.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .hypergraph import DimensionError
from .surrogate import ParameterError
from .tuner import RunRecord, TunerConfig, outer_loop

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Embedding:
    matrix_raw: np.ndarray
    matrix_reg: np.ndarray
    base_weights: np.ndarray
    low_dim: int
    z_bound: float = 0.1
    seed: int | tuple | None = None

    @property
    def high_dim(self) -> int:
        return self.matrix_raw.shape[0]

    def describe(self) -> dict:
        seed = list(self.seed) if isinstance(self.seed, tuple) else self.seed
        return {"seed": seed, "high_dim": self.high_dim, "low_dim": self.low_dim, "z_bound": self.z_bound}


def regularize(A) -> np.ndarray:
    """Divide every row by its L1 norm."""
    A = np.asarray(A, dtype=float)
    norms = np.abs(A).sum(axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("matrix has an all-zero row")
    return A / norms


def make_embedding(high_dim: int, low_dim: int, seed=0, base_weights=None, z_bound: float = 0.1,
                   matrix=None) -> Embedding:
    """Draw ``A`` with standard normal entries (or take ``matrix``) and regularize it."""
    if low_dim < 1 or low_dim > high_dim:
        raise ParameterError(f"low_dim must lie in [1, {high_dim}], got {low_dim}")
    if matrix is None:
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((high_dim, low_dim))
        for m in np.flatnonzero(~np.any(A != 0, axis=1)):
            log.warning("regenerating all-zero row %d of the embedding", m)
            while not np.any(A[m]):
                A[m] = rng.standard_normal(low_dim)
    else:
        A = np.array(matrix, dtype=float)
        if A.shape != (high_dim, low_dim):
            raise DimensionError(f"matrix shape {A.shape} != ({high_dim}, {low_dim})")
    w = np.zeros(high_dim) if base_weights is None else np.asarray(base_weights, dtype=float)
    if w.shape != (high_dim,):
        raise DimensionError(f"base weights of shape {w.shape}, expected ({high_dim},)")
    seed = tuple(seed) if isinstance(seed, (list, tuple)) else seed
    return Embedding(A, regularize(A), w, low_dim, z_bound, seed)


def project(emb: Embedding, z) -> np.ndarray:
    """High-dimensional weights ``A_reg @ z + w``."""
    z = np.asarray(z, dtype=float)
    if z.shape != (emb.low_dim,):
        raise DimensionError(f"z has shape {z.shape}, expected ({emb.low_dim},)")
    return emb.matrix_reg @ z + emb.base_weights


def block_basis(num_features: int, dims) -> np.ndarray:
    """K x len(dims) matrix whose columns are the unit vectors of ``dims``."""
    dims = list(dims)
    M = np.zeros((num_features, len(dims)))
    M[dims, np.arange(len(dims))] = 1.0
    return M


def embedded_basis(num_features: int, dims, emb: Embedding) -> np.ndarray:
    M = np.zeros((num_features, emb.low_dim))
    M[list(dims)] = emb.matrix_reg
    return M


def _merge(record: RunRecord, sub: RunRecord) -> None:
    record.iterations.extend(sub.iterations)
    record.decodes += sub.decodes


def rembo_tune(task, cfg: TunerConfig, w0, sparse_dims: int, low_dim: int, restarts: int = 4,
               z_bound: float = 0.1, matrix=None, keep_candidates: bool = False) -> tuple[np.ndarray, RunRecord]:
    """Two-step coordinate ascent: core weights by direct BO, then sparse weights in z-space.

    ``restarts`` independent embeddings are tried in step two; the weights
    with the best decoded dev BLEU over both steps are returned.
    ``low_dim = 0`` runs step one only.
    """
    K = task.num_features
    core = K - sparse_dims
    if sparse_dims < 1 or core < 1:
        raise ParameterError("need a nonempty core block and a nonempty sparse block")
    if low_dim > sparse_dims:
        raise ParameterError(f"low_dim {low_dim} exceeds the sparse dimension {sparse_dims}")
    if low_dim < 0:
        raise ParameterError("low_dim must be non-negative")
    w0 = np.asarray(w0, dtype=float).copy()
    if w0.shape != (K,):
        raise DimensionError(f"w0 has shape {w0.shape}, task has K={K}")
    w0[core:] = 0.0
    sparse = range(core, K)

    record = RunRecord("REMBO")
    record.extra = {"core_dims": core, "sparse_dims": sparse_dims, "low_dim": low_dim, "embeddings": []}
    w1, rec1 = outer_loop(task, cfg, w0, basis=block_basis(K, range(core)), stage="core",
                          keep_candidates=keep_candidates)
    _merge(record, rec1)
    best_w, best_dev = w1, rec1.final_dev_bleu
    record.extra["core_dev_bleu"] = best_dev

    if low_dim > 0:
        for r in range(restarts):
            emb = make_embedding(sparse_dims, low_dim, seed=(cfg.seed, 104729, r), base_weights=w1[core:],
                                 z_bound=z_bound, matrix=matrix)
            sub_cfg = replace(cfg, bound_b=z_bound, seed=cfg.seed * 1000 + r + 1)
            w2, rec2 = outer_loop(task, sub_cfg, w1, basis=embedded_basis(K, sparse, emb),
                                  stage=f"sparse-{r}", keep_candidates=keep_candidates)
            _merge(record, rec2)
            record.extra["embeddings"].append({**emb.describe(), "final_dev_bleu": rec2.final_dev_bleu})
            if rec2.final_dev_bleu > best_dev:
                best_w, best_dev = w2, rec2.final_dev_bleu
    record.final_weights = np.asarray(best_w).tolist()
    record.final_dev_bleu = best_dev
    return np.asarray(best_w), record


def direct_sparse_tune(task, cfg: TunerConfig, w_core, dims, z_bound: float | None = None) -> tuple[np.ndarray, RunRecord]:
    """Bounded BO directly on chosen sparse coordinates (core and the rest frozen)."""
    sub_cfg = replace(cfg, bound_b=cfg.bound_b if z_bound is None else z_bound, seed=cfg.seed * 1000 + 1)
    return outer_loop(task, sub_cfg, w_core, basis=block_basis(task.num_features, dims), stage="direct")
