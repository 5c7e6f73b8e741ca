#!/usr/bin/env python3
"""Effect of the box half-width b on dev and held-out test BLEU.

b = 0.01 gets ``--small-factor`` times the outer iterations of the others.
"""

import argparse
import json

import numpy as np

from hgbo.experiments import default_task, tune


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tasks", type=int, default=10)
    ap.add_argument("--bounds", default="0.01,0.1,0.5")
    ap.add_argument("--outer-iters", type=int, default=10)
    ap.add_argument("--small-factor", type=int, default=3)
    ap.add_argument("--out")
    args = ap.parse_args()

    bounds = [float(b) for b in args.bounds.split(",")]
    res = {b: [] for b in bounds}
    for s in range(1, args.tasks + 1):
        task = default_task(s)
        for b in bounds:
            iters = args.outer_iters * (args.small_factor if b < 0.1 else 1)
            r = tune(task, "HG", s, bound=b, outer_iters=iters)
            res[b].append(r.to_dict())
            print(f"task {s} b={b:g} ({iters} iters): dev {100 * r.final_dev:.2f} test {100 * r.final_test:.2f}"
                  f" {r.seconds:.0f}s", flush=True)
    for b in bounds:
        print(f"b={b:g}: mean dev {100 * np.mean([r['final_dev'] for r in res[b]]):.2f}"
              f"  mean test {100 * np.mean([r['final_test'] for r in res[b]]):.2f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump({str(b): v for b, v in res.items()}, f, indent=1)


if __name__ == "__main__":
    main()
