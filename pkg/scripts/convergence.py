"""Relative error and weight change per ADMM iteration for one variant.

    python scripts/convergence.py --grid 64 --factor 1 --variant 3DShearCS
"""

import argparse
import time
from dataclasses import replace

import numpy as np

from shearcs.encoding import EncodingOperator
from shearcs.numerics import Grid3
from shearcs.sampling import generate_rpe, retro_undersample
from shearcs.simulation import (
    default_phantom_spec,
    make_coils,
    make_phantom,
    noise_sigma_for_snr,
    simulate_acquisition,
)
from shearcs.solver import ADMMConfig, load_config, reconstruct_variant


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--factor", type=int, default=1)
    p.add_argument("--variant", default="3DShearCS")
    p.add_argument("--solver", help="solver config file")
    p.add_argument("--max-outer", type=int)
    p.add_argument("--snr-db", type=float, default=30.0)
    args = p.parse_args()

    n = args.grid
    g = Grid3.cube(n, 96.0 / n)
    truth, _ = make_phantom(g, default_phantom_spec(g))
    maps = make_coils(g, 8, seed=1)
    base = generate_rpe(n, n // 4, n)
    E0 = EncodingOperator(maps, base)
    sigma = noise_sigma_for_snr(E0.forward(truth.data), args.snr_db)
    y0 = simulate_acquisition(truth, E0, sigma, seed=1).data

    t = retro_undersample(base, args.factor)
    keep = (t.line_ids[:, None] * n * n + np.arange(n * n)).ravel()
    E = EncodingOperator(maps, t)
    cfg = load_config(args.solver) if args.solver else ADMMConfig()
    if args.max_outer:
        cfg = replace(cfg, max_outer=args.max_outer)

    start = time.perf_counter()
    res = reconstruct_variant(args.variant, y0[:, keep], E, cfg, reference=truth)
    print(f"{args.variant} grid {n} factor {args.factor}: {time.perf_counter() - start:.1f}s")
    print("iteration  rel_err  weight_change  residual")
    for d in res.diagnostics:
        print(f"{d.iteration:9d}  {d.rel_err:.4f}  {d.weight_change:13.4f}  {d.residual:.4g}")


if __name__ == "__main__":
    main()
