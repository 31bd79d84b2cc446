"""Summarize a run_grid.py JSON-lines file as seed-mean tables.

Usage: python scripts/summarize_grid.py GRID.jsonl
"""

import json
import sys
from collections import defaultdict

import numpy as np

from dsvox.experiments import iters_to_reach
from dsvox.train import EvalRecord


def main(path):
    runs = {}
    for line in open(path):
        r = json.loads(line)
        runs[(r["views"], r["mode"], r["seed"])] = [EvalRecord(**h) for h in r["history"]]
    cells = defaultdict(list)
    for (v, m, s), hist in runs.items():
        cells[(v, m)].append((s, hist))
    print(f"{'views':>5} {'mode':>6} {'seeds':>5} {'psnr':>7} {'ssim':>6} {'derr%':>7} {'var':>7}")
    for (v, m) in sorted(cells):
        finals = [h[-1] for _, h in cells[(v, m)]]
        print(f"{v:5d} {m:>6} {len(finals):5d} {np.mean([f.psnr for f in finals]):7.2f} "
              f"{np.mean([f.ssim for f in finals]):6.3f} "
              f"{np.mean([f.depth_err_pct for f in finals]):7.2f} "
              f"{np.mean([f.depth_var for f in finals]):7.3f}")
    for v in sorted({v for v, _ in cells}):
        its = [iters_to_reach(runs[(v, "kl", s)], runs[(v, "none", s)][-1].psnr)
               for s, _ in cells.get((v, "kl"), []) if (v, "none", s) in runs]
        if its:
            print(f"{v} views: kl iterations to none-final PSNR {its}")


if __name__ == "__main__":
    main(sys.argv[1])
