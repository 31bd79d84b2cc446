"""Sweep the depth-loss weight on one few-view dataset.

Usage: python scripts/sweep_lambda.py [--views 2] [--mode kl] [--iters 2000]
       [--lambdas 0.1 1 3 10 30] [--seed 0]
"""

import argparse
from dataclasses import replace

from dsvox.experiments import DEFAULT_PRESET, run_one


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--views", type=int, default=2)
    p.add_argument("--mode", default="kl", choices=("kl", "mse", "dense"))
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambdas", type=float, nargs="+", default=[0.1, 1.0, 3.0, 10.0, 30.0])
    a = p.parse_args()
    base = replace(DEFAULT_PRESET, iters=a.iters, eval_every=a.iters)
    ds = base.dataset(a.views, a.seed)
    print("lambda,psnr,ssim,depth_err_pct,depth_var")
    for lam in a.lambdas:
        f = run_one(a.views, a.mode, a.seed, replace(base, lambda_depth=lam), ds).final
        print(f"{lam},{f.psnr:.3f},{f.ssim:.4f},{f.depth_err_pct:.3f},{f.depth_var:.4f}", flush=True)


if __name__ == "__main__":
    main()
