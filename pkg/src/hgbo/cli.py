"""Command-line driver: generate synthetic tasks, tune weights, compare runs.

    hgbo generate --sentences 50 --features 18 --seed 7 --out task/
    hgbo tune --task task/ --variant hg-bo --bound 0.1 --out runs/hg
    hgbo compare runs/*/report.json

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .embedding import rembo_tune
from .hypergraph import HypergraphError, format_hypergraph, read_hypergraphs
from .mert import mert_outer
from .metrics import read_sentences, write_sentences
from .simulator import SyntheticTask, generate_task, perturbed_start
from .surrogate import ConditioningError, ParameterError
from .tuner import TunerConfig, TuningAborted, outer_loop, read_weights, write_weights

log = logging.getLogger("hgbo")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
VARIANTS = {"nbl-bo": "NBL", "hg-bo": "HG", "chg-bo": "CHG", "rembo": "HG", "mert": "HG"}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# config files


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment. Keys use underscores or dashes."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot read config {path}: {err}") from err
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def format_config(d: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in d.items())


def _apply_config(parser: argparse.ArgumentParser, path) -> None:
    """Install the config file's values as parser defaults, so explicit flags win."""
    known = {a.dest: a for a in parser._actions}
    defaults = {}
    for k, v in read_config(path).items():
        if k not in known or k in ("help", "config"):
            raise UsageError(f"unknown config key {k!r}")
        act = known[k]
        if isinstance(act, argparse._StoreTrueAction):
            v = v.lower() in ("1", "true", "yes", "on")
        elif act.type is not None:
            try:
                v = act.type(v)
            except (TypeError, ValueError, argparse.ArgumentTypeError) as err:
                raise UsageError(f"config key {k}: {err}") from err
        defaults[k] = v
    # a config value satisfies a required flag
    for k in defaults:
        known[k].required = False
    parser.set_defaults(**defaults)


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _bounds(text: str) -> list[float]:
    try:
        vals = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"bad bound list {text!r}") from err
    if not vals or any(not v > 0 for v in vals):
        raise argparse.ArgumentTypeError("bounds must be positive")
    return vals


# ---------------------------------------------------------------------------
# task files


META_NAME = "task.meta"


def write_task(task: SyntheticTask, out: Path, include_weights: bool = False, init_radius: float = 0.3,
               init_seed: int = 0) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "dev.hg").write_text("".join(format_hypergraph(g) for g in task.master_graphs), encoding="utf-8")
    write_sentences(out / "dev.ref", task.references)
    (out / "test.hg").write_text("".join(format_hypergraph(g) for g in task.test_graphs), encoding="utf-8")
    write_sentences(out / "test.ref", task.test_references)
    meta = dict(task.meta)
    meta["num_features"] = task.num_features
    meta["core_dims"] = task.core_dims
    if include_weights:
        meta["true_weights"] = ",".join(repr(float(v)) for v in task.true_weights)
    (out / META_NAME).write_text(format_config(meta), encoding="utf-8")
    write_weights(out / "init.weights", perturbed_start(task, init_radius, init_seed))


def load_task(path: Path, beam: int | None = None) -> tuple[SyntheticTask, str]:
    """Read a task directory; returns the task and a hash of its contents."""
    path = Path(path)
    if not (path / META_NAME).exists():
        raise DataError(f"{path}: no {META_NAME} (not a task directory)")
    meta = read_config(path / META_NAME)
    try:
        K = int(meta["num_features"])
        core = int(meta["core_dims"]) if meta.get("core_dims", "None") != "None" else None
        task_beam = int(meta["beam"])
    except (KeyError, ValueError) as err:
        raise DataError(f"{path / META_NAME}: missing or bad field {err}") from err
    dev = read_hypergraphs(path / "dev.hg")
    refs = read_sentences(path / "dev.ref")
    test = read_hypergraphs(path / "test.hg") if (path / "test.hg").exists() else []
    test_refs = read_sentences(path / "test.ref") if (path / "test.ref").exists() else []
    if len(dev) != len(refs) or len(test) != len(test_refs):
        raise DataError(f"{path}: hypergraph and reference counts differ")
    if not dev:
        raise DataError(f"{path}: empty dev set")
    for g in dev + test:
        if g.num_features != K:
            raise DataError(f"{path}: sentence {g.sentence_id} has K={g.num_features}, meta says {K}")
    w_star = None
    if "true_weights" in meta:
        w_star = np.array([float(v) for v in meta["true_weights"].split(",")])
    digest = hashlib.sha256()
    for name in ("dev.hg", "dev.ref", "test.hg", "test.ref"):
        p = path / name
        digest.update(name.encode())
        digest.update(p.read_bytes() if p.exists() else b"")
    digest.update(f"K={K} core={core} beam={task_beam}".encode())
    task = SyntheticTask(
        master_graphs=dev, references=refs, num_features=K, beam=beam or task_beam,
        true_weights=w_star, test_graphs=test, test_references=test_refs, core_dims=core, meta=meta,
    )
    return task, digest.hexdigest()


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    if args.features < 2:
        raise UsageError("--features must be at least 2")
    if args.sentences < 1 or args.test_sentences < 0:
        raise UsageError("--sentences must be positive")
    task = generate_task(
        num_sentences=args.sentences, K=args.features, vocab_size=args.vocab, depth=args.depth,
        seed=args.seed, beam=args.beam, num_test=args.test_sentences, fanout=args.fanout,
        sparse_dims=args.sparse_dims, sparse_active=args.sparse_active,
    )
    out = Path(args.out)
    try:
        write_task(task, out, include_weights=args.include_weights, init_radius=args.init_radius,
                   init_seed=args.seed)
    except OSError as err:
        raise DataError(f"cannot write task to {out}: {err}") from err
    print(f"wrote {len(task.master_graphs)} dev + {len(task.test_graphs)} test sentences to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# tune


@dataclass
class ExperimentConfig:
    variant: str
    bound: float
    inner_iters: int = 100
    outer_iters: int = 10
    nbest_size: int = 100
    beam: int | None = None
    seed: int = 0
    low_dim: int = 8
    restarts: int = 4
    init_samples: int = 10
    candidate_pool: int = 2000
    init: str | None = None
    extra: dict = field(default_factory=dict)

    def tuner_config(self) -> TunerConfig:
        return TunerConfig(
            variant=VARIANTS[self.variant], bound_b=self.bound, inner_iters=self.inner_iters,
            outer_iters=self.outer_iters, init_samples=self.init_samples,
            candidate_pool=self.candidate_pool, seed=self.seed, nbest_size=self.nbest_size,
        )

    def canonical(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def run_experiment(task: SyntheticTask, ec: ExperimentConfig, w0) -> tuple[np.ndarray, object]:
    cfg = ec.tuner_config()
    if ec.variant == "mert":
        return mert_outer(task, cfg, w0)
    if ec.variant == "rembo":
        core = task.core_dims
        if core is None or core >= task.num_features:
            raise DataError("rembo needs a task with a sparse feature block (generate --sparse-dims)")
        return rembo_tune(task, cfg, w0, task.num_features - core, ec.low_dim, restarts=ec.restarts)
    return outer_loop(task, cfg, w0)


def _write_run(out: Path, ec: ExperimentConfig, task: SyntheticTask, task_hash: str, w, rec, elapsed: float):
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "config": asdict(ec),
        "config_hash": _sha(ec.canonical()),
        "task_hash": task_hash,
        "label": ec.variant if ec.variant == "mert" else f"{ec.variant}@{ec.bound:g}",
        "final_test_bleu": task.bleu(w, "test") if task.test_graphs else None,
        "run": rec.to_dict(timing=False),
    }
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    (out / "report.json").write_text(text, encoding="utf-8")
    timing = {"total_seconds": elapsed, "iterations": [it.wall_time for it in rec.iterations]}
    (out / "timing.json").write_text(json.dumps(timing, indent=1) + "\n", encoding="utf-8")
    (out / "config.txt").write_text(format_config({k: v for k, v in asdict(ec).items() if k != "extra"}),
                                    encoding="utf-8")
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["iteration", "stage", "bo_score", "dev_bleu"])
    for it in rec.iterations:
        wr.writerow([it.iteration, it.stage, "" if it.bo_score is None else repr(it.bo_score), repr(it.dev_bleu)])
    (out / "trace.csv").write_text(buf.getvalue(), encoding="utf-8")
    write_weights(out / "final.weights", w)
    return report


def cmd_tune(args) -> int:
    task, task_hash = load_task(Path(args.task), beam=args.beam)
    if args.init:
        w0 = read_weights(args.init, task.num_features)
    elif (Path(args.task) / "init.weights").exists():
        w0 = read_weights(Path(args.task) / "init.weights", task.num_features)
    else:
        w0 = np.zeros(task.num_features)
    out_root = Path(args.out)
    for b in args.bound:
        ec = ExperimentConfig(
            variant=args.variant, bound=b, inner_iters=args.inner_iters, outer_iters=args.outer_iters,
            nbest_size=args.nbest_size, beam=args.beam, seed=args.seed, low_dim=args.low_dim,
            restarts=args.restarts, init_samples=args.init_samples, candidate_pool=args.candidate_pool,
            init=str(args.init) if args.init else None,
        )
        try:
            ec.tuner_config()
        except ValueError as err:
            raise UsageError(str(err)) from err
        out = out_root / f"bound-{b:g}" if len(args.bound) > 1 else out_root
        t0 = time.perf_counter()
        w, rec = run_experiment(task, ec, w0)
        elapsed = time.perf_counter() - t0
        try:
            report = _write_run(out, ec, task, task_hash, w, rec, elapsed)
        except OSError as err:
            raise DataError(f"cannot write results to {out}: {err}") from err
        test = report["final_test_bleu"]
        print(f"{report['label']}: dev BLEU {100 * rec.final_dev_bleu:.2f}"
              + (f", test BLEU {100 * test:.2f}" if test is not None else "")
              + f", {rec.decodes} decodes -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare


def plateau_iteration(trace, tol: float = 0.0005) -> int:
    """Decodes until the best-so-far dev BLEU first comes within ``tol`` of its final value."""
    best = np.maximum.accumulate(np.asarray(trace, dtype=float))
    return int(np.argmax(best >= best[-1] - tol)) + 1


def summarize(reports: list[dict]) -> list[dict]:
    groups: dict[str, list[dict]] = {}
    for r in reports:
        groups.setdefault(r["label"], []).append(r)
    rows = []
    for label, rs in groups.items():
        dev = np.array([r["run"]["final_dev_bleu"] for r in rs])
        tests = [r["final_test_bleu"] for r in rs if r["final_test_bleu"] is not None]
        plateau = [plateau_iteration([it["dev_bleu"] for it in r["run"]["iterations"]]) for r in rs]
        rows.append({
            "label": label,
            "runs": len(rs),
            "dev_mean": float(dev.mean()),
            "dev_var": float(dev.var()),
            "test_mean": float(np.mean(tests)) if tests else None,
            "test_var": float(np.var(tests)) if tests else None,
            "plateau_mean": float(np.mean(plateau)),
        })
    return rows


def format_table(rows: list[dict]) -> str:
    head = f"{'run':<16}{'n':>4}{'dev':>9}{'dev var':>11}{'test':>9}{'test var':>11}{'plateau':>9}"
    lines = [head, "-" * len(head)]
    for r in rows:
        t = "-" if r["test_mean"] is None else f"{100 * r['test_mean']:.2f}"
        tv = "-" if r["test_var"] is None else f"{1e4 * r['test_var']:.3f}"
        lines.append(f"{r['label']:<16}{r['runs']:>4}{100 * r['dev_mean']:>9.2f}{1e4 * r['dev_var']:>11.3f}"
                     f"{t:>9}{tv:>11}{r['plateau_mean']:>9.1f}")
    lines.append("(BLEU x100; variances in BLEU x100 squared; plateau = decodes to best)")
    return "\n".join(lines) + "\n"


def cmd_compare(args) -> int:
    if len(args.reports) < 2:
        raise UsageError("compare needs at least two reports")
    reports = []
    for p in args.reports:
        try:
            reports.append(json.loads(Path(p).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as err:
            raise DataError(f"cannot read report {p}: {err}") from err
    hashes = {r.get("task_hash") for r in reports}
    if len(hashes) != 1:
        raise DataError("reports come from different tasks (task_hash mismatch); refusing to compare")
    rows = summarize(reports)
    sys.stdout.write(format_table(rows))
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as f:
            wr = csv.DictWriter(f, fieldnames=list(rows[0]), lineterminator="\n")
            wr.writeheader()
            wr.writerows(rows)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hgbo", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic task directory")
    g.add_argument("--config")
    g.add_argument("--sentences", type=int, default=50)
    g.add_argument("--test-sentences", type=int, default=50)
    g.add_argument("--features", type=int, default=18)
    g.add_argument("--vocab", type=int, default=50)
    g.add_argument("--depth", type=int, default=6)
    g.add_argument("--beam", type=int, default=4)
    g.add_argument("--fanout", type=int, default=6)
    g.add_argument("--sparse-dims", type=int, default=0)
    g.add_argument("--sparse-active", type=int, default=5)
    g.add_argument("--init-radius", type=float, default=0.3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--include-weights", action="store_true", help="store the planted weights in task.meta")
    g.add_argument("--out", required=True)

    t = sub.add_parser("tune", help="tune weights on a task directory")
    t.add_argument("--config")
    t.add_argument("--task", required=True)
    t.add_argument("--variant", choices=sorted(VARIANTS), default="hg-bo")
    t.add_argument("--bound", type=_bounds, default=[0.1], help="half-width b, or a comma list for a sweep")
    t.add_argument("--inner-iters", type=int, default=100)
    t.add_argument("--outer-iters", type=int, default=10)
    t.add_argument("--nbest-size", type=int, default=100)
    t.add_argument("--beam", type=int, default=None, help="override the task's beam")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--low-dim", type=int, default=8)
    t.add_argument("--restarts", type=int, default=4)
    t.add_argument("--init-samples", type=int, default=10)
    t.add_argument("--candidate-pool", type=int, default=2000)
    t.add_argument("--init", help="start weights file (default: the task's init.weights)")
    t.add_argument("--out", required=True)

    c = sub.add_parser("compare", help="summarize several run reports")
    c.add_argument("reports", nargs="+")
    c.add_argument("--csv")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        cfg_path = pre.parse_known_args(argv)[0].config
        cmd = next((a for a in argv if a in ("generate", "tune")), None)
        if cfg_path and cmd:
            _apply_config(parser._subparsers._group_actions[0].choices[cmd], cfg_path)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return {"generate": cmd_generate, "tune": cmd_tune, "compare": cmd_compare}[args.cmd](args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, HypergraphError, ParameterError, TuningAborted, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (ConditioningError, np.linalg.LinAlgError, FloatingPointError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
