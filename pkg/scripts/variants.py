#!/usr/bin/env python3
"""Run-to-run spread of NBL-BO, HG-BO and CHG-BO over several BO seeds per task."""

import argparse
import json

import numpy as np

from hgbo.experiments import default_task, pooled_variance, tune, within_task_variance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tasks", type=int, default=10)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--variants", default="NBL,HG,CHG")
    ap.add_argument("--out")
    args = ap.parse_args()

    variants = args.variants.split(",")
    finals = {v: {} for v in variants}
    early = {v: {} for v in variants}
    for s in range(1, args.tasks + 1):
        task = default_task(s)
        for v in variants:
            for r in range(args.seeds):
                run = tune(task, v, s, run_seed=100 * s + r)
                finals[v].setdefault(s, []).append(run.final_dev)
                early[v].setdefault(s, []).append(run.dev_trace[min(2, len(run.dev_trace) - 1)])
                print(f"task {s} {v:<4} seed {r}: final {100 * run.final_dev:.2f} "
                      f"trace {' '.join(f'{100 * x:.1f}' for x in run.dev_trace)}", flush=True)
    for v in variants:
        print(f"{v:<4} mean {100 * np.mean([x for xs in finals[v].values() for x in xs]):.2f}"
              f"  within-task var {1e4 * within_task_variance(finals[v]):.4f}"
              f"  pooled var {1e4 * pooled_variance(finals[v]):.4f}"
              f"  iteration-2 within-task var {1e4 * within_task_variance(early[v]):.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump({"final": finals, "iteration2": early}, f, indent=1)


if __name__ == "__main__":
    main()
