"""Observed convergence order of the sixth-order scheme for every problem family.

Each problem is solved with GMRES on a halving grid sequence; the table lists the
max-norm error and log2(err(2h) / err(h)) for each refinement.

Usage: python scripts/convergence_study.py [--k 20] [--coarsest 32] [--levels 3]
       [--problems 3d-dirichlet lateral-neumann ...]
"""
import argparse
import math
import sys

from compact_helmholtz.core import ConfigurationError
from compact_helmholtz.krylov import IterationConfig, solve
from compact_helmholtz.operator import assemble_rhs
from compact_helmholtz.problems import FAMILIES, VERIFICATION, exact_error, get_problem


def study(name: str, k: float, inv_hs, config: IterationConfig):
    problem = get_problem(name, k)
    rows, prev = [], None
    for n in inv_hs:
        setup = problem.setup(1.0 / n)
        U, rep = solve(setup, assemble_rhs(setup), config)
        err = exact_error(setup, U, problem)
        order = math.log2(prev / err) if prev else None
        rows.append((n, rep.label(), err, order))
        prev = err
    return rows


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--k", type=float, default=20.0)
    p.add_argument("--coarsest", type=int, default=32, help="1/h of the coarsest grid")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--problems", nargs="*", default=sorted({**FAMILIES, **VERIFICATION}))
    p.add_argument("--tol", type=float, default=1e-12)
    args = p.parse_args(argv)

    inv_hs = [args.coarsest * 2 ** i for i in range(args.levels)]
    config = IterationConfig(tol=args.tol, max_iter=200)
    print("| problem | 1/h | GMRES | max error | order |")
    print("|---|---|---|---|---|")
    for name in args.problems:
        try:
            rows = study(name, args.k, inv_hs, config)
        except (ConfigurationError, KeyError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        for n, its, err, order in rows:
            o = "-" if order is None else f"{order:.2f}"
            print(f"| {name} | {n} | {its} | {err:.3e} | {o} |")
    return 0


if __name__ == "__main__":
    sys.exit(main())
