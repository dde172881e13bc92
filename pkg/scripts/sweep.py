"""Full study: simulate, reconstruct every variant at every factor, evaluate,
then print the results table.

    python scripts/sweep.py configs/small_manifest.txt
"""

import sys
import time

from shearcs import cli
from shearcs.metrics import read_reports


def main(manifest="configs/desk_manifest.txt"):
    m = cli.load_manifest(manifest)
    start = time.perf_counter()
    cli.cmd_sweep(m)
    print(f"sweep finished in {(time.perf_counter() - start) / 60:.1f} min")
    rows = read_reports(m.path("results.csv"))
    cols = ["variant", "r_total", "relative_error", "haarpsi", "truth_relative_error",
            "truth_haarpsi", "vessel_sharpness"]
    print("  ".join(f"{c:>20s}" for c in cols))
    for r in rows:
        print("  ".join(f"{r.get(c, ''):>20s}" for c in cols))


if __name__ == "__main__":
    main(*sys.argv[1:])
