"""Energy share of the largest shearlet coefficients of the default phantom."""

import argparse

import numpy as np

from shearcs.numerics import Grid3
from shearcs.simulation import default_phantom_spec, make_phantom
from shearcs.transforms import build_transform

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--grid", type=int, default=64)
p.add_argument("--kind", default="shearlet3d")
args = p.parse_args()

g = Grid3.cube(args.grid, 96.0 / args.grid)
x, _ = make_phantom(g, default_phantom_spec(g))
energy = np.abs(build_transform(args.kind, g).analyze(x.data, dtype=np.complex64).data) ** 2
energy = np.sort(energy.astype(np.float64))[::-1]
cum = np.cumsum(energy) / energy.sum()
for frac in (0.01, 0.02, 0.05, 0.10):
    k = int(np.ceil(frac * energy.size))
    print(f"top {100 * frac:4.1f}% of {energy.size} coefficients: {100 * cum[k - 1]:.2f}% of the energy")
