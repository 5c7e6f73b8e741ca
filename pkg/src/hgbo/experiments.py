"""Experiment protocols on synthetic tasks, shared by scripts/ and the acceptance suite.

Every run is a pure function of its arguments, so results can be cached or
recomputed freely.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .embedding import direct_sparse_tune, rembo_tune
from .mert import mert_outer
from .simulator import SyntheticTask, generate_task, oracle_bleu, perturbed_start, true_sparse_dims
from .tuner import TunerConfig, outer_loop

START_RADIUS = 0.3


@dataclass
class RunSummary:
    variant: str
    task_seed: int
    run_seed: int
    bound: float
    dev_trace: list
    bo_trace: list
    final_dev: float
    final_test: float | None
    oracle_dev: float
    decodes: int
    seconds: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def reached(self, frac: float = 0.95, within: int = 5) -> bool:
        """Decoded dev BLEU of some w_i, i <= within, is at least frac * oracle."""
        return max(self.dev_trace[: within + 1]) >= frac * self.oracle_dev


def default_task(seed: int, num_test: int = 50, **kw) -> SyntheticTask:
    return generate_task(seed=seed, num_test=num_test, **kw)


def tune(task: SyntheticTask, variant: str, task_seed: int, run_seed: int | None = None,
         bound: float = 0.1, outer_iters: int = 10, w0=None, **cfg_kw) -> RunSummary:
    """One tuning run from the perturbed start of ``task``.

    ``variant`` is NBL, HG, CHG or MERT. MERT gets the same decode budget
    (``outer_iters``) as the BO variants.
    """
    run_seed = task_seed if run_seed is None else run_seed
    if w0 is None:
        w0 = perturbed_start(task, START_RADIUS, seed=task_seed)
    v = variant.upper()
    cfg = TunerConfig(variant="HG" if v == "MERT" else v, bound_b=bound, outer_iters=outer_iters,
                      seed=run_seed, **cfg_kw)
    t0 = time.perf_counter()
    if v == "MERT":
        w, rec = mert_outer(task, cfg, w0)
    else:
        w, rec = outer_loop(task, cfg, w0)
    secs = time.perf_counter() - t0
    return RunSummary(
        variant=v, task_seed=task_seed, run_seed=run_seed, bound=bound,
        dev_trace=rec.dev_trace, bo_trace=rec.bo_trace, final_dev=rec.final_dev_bleu,
        final_test=task.bleu(w, "test") if task.test_graphs else None,
        oracle_dev=oracle_bleu(task), decodes=rec.decodes, seconds=secs,
    )


def sparse_task(seed: int, sparse_dims: int = 200, sparse_active: int = 5, **kw) -> SyntheticTask:
    return generate_task(seed=seed, sparse_dims=sparse_dims, sparse_active=sparse_active, **kw)


def rembo_vs_direct(seed: int, sparse_dims: int = 200, sparse_active: int = 5, low_dim: int = 8,
                    restarts: int = 4, outer_iters: int = 10, **task_kw) -> dict:
    """REMBO over the whole sparse block vs bounded BO on the truly active sparse weights.

    Both start from the same core-tuned weights, so the comparison isolates
    the sparse step.
    """
    task = sparse_task(seed, sparse_dims, sparse_active, **task_kw)
    w0 = perturbed_start(task, START_RADIUS, seed=seed)
    cfg = TunerConfig(variant="HG", outer_iters=outer_iters, seed=seed)
    t0 = time.perf_counter()
    _, rec = rembo_tune(task, cfg, w0, sparse_dims, low_dim, restarts=restarts)
    t_rembo = time.perf_counter() - t0
    core = [it for it in rec.iterations if it.stage == "core"]
    w_core = np.array(max(core, key=lambda it: it.dev_bleu).weights)
    t0 = time.perf_counter()
    _, drec = direct_sparse_tune(task, cfg, w_core, true_sparse_dims(task))
    t_direct = time.perf_counter() - t0
    return {
        "seed": seed,
        "core_dev": rec.extra["core_dev_bleu"],
        "rembo_dev": rec.final_dev_bleu,
        "restart_devs": [e["final_dev_bleu"] for e in rec.extra["embeddings"]],
        "direct_dev": drec.final_dev_bleu,
        "oracle_dev": oracle_bleu(task),
        "ratio": rec.final_dev_bleu / drec.final_dev_bleu if drec.final_dev_bleu > 0 else float("nan"),
        "seconds": t_rembo + t_direct,
    }


def within_task_variance(finals: dict) -> float:
    """Mean over tasks of the variance across run seeds; ``finals[task] = [values]``."""
    return float(np.mean([np.var(v) for v in finals.values()]))


def pooled_variance(finals: dict) -> float:
    return float(np.var([x for v in finals.values() for x in v]))


def format_runs(runs: list[RunSummary]) -> str:
    lines = [f"{'variant':<6}{'task':>5}{'seed':>5}{'bound':>7}{'dev':>8}{'test':>8}{'oracle':>8}{'dec':>5}{'sec':>7}  dev trace"]
    for r in runs:
        test = "-" if r.final_test is None else f"{100 * r.final_test:.2f}"
        trace = " ".join(f"{100 * x:.1f}" for x in r.dev_trace)
        lines.append(f"{r.variant:<6}{r.task_seed:>5}{r.run_seed:>5}{r.bound:>7g}{100 * r.final_dev:>8.2f}{test:>8}"
                     f"{100 * r.oracle_dev:>8.2f}{r.decodes:>5}{r.seconds:>7.1f}  {trace}")
    return "\n".join(lines)
