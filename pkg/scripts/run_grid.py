"""Run the full few-view grid and dump final metrics per run as JSON lines.

Usage: python scripts/run_grid.py OUT.jsonl [--seeds 0 1 2] [--resume]

With --resume, cells already present in OUT.jsonl are skipped and new
results are appended.
"""

import argparse
import json
import time
from dataclasses import asdict
from pathlib import Path

from dsvox.experiments import DEFAULT_PRESET, acceptance_grid, run_grid


def main():
    p = argparse.ArgumentParser()
    p.add_argument("out")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--resume", action="store_true")
    args = p.parse_args()
    cells = acceptance_grid(tuple(args.seeds))
    if args.resume and Path(args.out).exists():
        done = {(r["views"], r["mode"], r["seed"])
                for r in map(json.loads, Path(args.out).read_text().splitlines())}
        cells = [c for c in cells if c not in done]
    t0 = time.time()
    with open(args.out, "a" if args.resume else "w") as f:
        def progress(rec):
            line = {"views": rec.views, "mode": rec.depth_mode, "seed": rec.seed,
                    "elapsed_s": round(time.time() - t0, 1),
                    "history": [asdict(h) for h in rec.history]}
            f.write(json.dumps(line) + "\n")
            f.flush()
            print(f"{rec.depth_mode:5s} views={rec.views:2d} seed={rec.seed} "
                  f"psnr={rec.final.psnr:.2f} depth_err={rec.final.depth_err_pct:.2f} "
                  f"var={rec.final.depth_var:.3f} t={time.time() - t0:.0f}s", flush=True)

        run_grid(cells, DEFAULT_PRESET, progress)


if __name__ == "__main__":
    main()
