"""Run every experiment spec under scripts/specs and the eigenvalue-bound table.

Usage: python scripts/run_tables.py [--only one_d_k20 neumann_k20 ...] [--out-dir results]
       [--include-fine]

The ``*_fine`` specs (512^3 grids) are skipped unless --include-fine is given.
"""
import argparse
import sys
import time
from pathlib import Path

from compact_helmholtz.cli import main

SPEC_DIR = Path(__file__).resolve().parent / "specs"


def run(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--only", nargs="*", help="spec stems to run")
    p.add_argument("--out-dir", default="results")
    p.add_argument("--include-fine", action="store_true")
    p.add_argument("--mem-budget", default=None)
    args = p.parse_args(argv)

    out_dir = Path(args.out_dir)
    worst = 0
    t0 = time.perf_counter()
    rc = main(["spectrum", "--out", str(out_dir / "eigen_bounds")])
    worst = max(worst, rc)
    for spec in sorted(SPEC_DIR.glob("*.cfg")):
        if args.only and spec.stem not in args.only:
            continue
        if spec.stem.endswith("_fine") and not args.include_fine:
            continue
        print(f"[{time.perf_counter() - t0:7.1f}s] {spec.stem}", file=sys.stderr)
        cmd = ["table", str(spec), "--out", str(out_dir / spec.stem), "-v"]
        if args.mem_budget:
            cmd += ["--mem-budget", args.mem_budget]
        worst = max(worst, main(cmd))
    print(f"done in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return worst


if __name__ == "__main__":
    sys.exit(run())
