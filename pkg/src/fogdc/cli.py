"""Command-line interface.

Exit codes: 0 success, 1 infeasible instance, 2 any other error.
"""
from __future__ import annotations

import argparse
import math
import sys
from typing import List, Optional, Sequence

from . import bench, fitting, jcora, oracle, recompress
from .jcora import InfeasibleInstance
from .model import Decision, Kind
from .scenario import ConfigError, dumps_instance, generate_instance, load_instance, parse_assignments

EXIT_OK, EXIT_INFEASIBLE, EXIT_ERROR = 0, 1, 2


def _decision_lines(decisions: Sequence[Decision], costs: Sequence[float]) -> List[str]:
    out = [f"{'user':>4} {'mode':<18} {'omega_u':>8} {'omega_f':>8} {'f_u[GHz]':>9} "
           f"{'f_f[GHz]':>9} {'d[Mbps]':>8} {'wedc':>10}"]
    for k, (d, c) in enumerate(zip(decisions, costs)):
        out.append(f"{k:>4} {d.mode.value:<18} {d.omega_u:>8.4f} {d.omega_f:>8.4f} {d.f_u / 1e9:>9.4f} "
                   f"{d.f_f / 1e9:>9.4f} {d.d / 1e6:>8.4f} {c:>10.6f}")
    return out


def _print_solution(sol: jcora.Solution) -> None:
    print(f"eta* = {sol.eta_star:.9g}")
    print(f"max wedc = {sol.max_wedc:.9g}  (lower bound {sol.eta_lower:.9g}, {sol.iterations} iterations)")
    print(f"fog = {sol.fog_total / 1e9:.6g} GHz  backhaul = {sol.backhaul_total / 1e6:.6g} Mbps")
    for line in _decision_lines(sol.decisions, sol.wedc):
        print(line)


def cmd_fit(args) -> int:
    samples = fitting.load_samples(args.samples)
    rep = fitting.fit_comparison_models(samples, Kind(args.kind))
    g1, g2, g3 = rep.power
    print(f"power        g1={g1:.9g} g2={g2:.9g} g3={g3:.9g}  rmse={rep.rmse['power']:.6g}")
    print(f"linear       b1={rep.linear[0]:.9g} b2={rep.linear[1]:.9g}  rmse={rep.rmse['linear']:.6g}")
    print(f"exponential  e1={rep.exponential[0]:.9g} e2={rep.exponential[1]:.9g}  "
          f"rmse={rep.rmse['exponential']:.6g}")
    print(f"best = {rep.best}")
    return EXIT_OK


def cmd_solve(args) -> int:
    _print_solution(jcora.solve(load_instance(args.instance), args.epsilon))
    return EXIT_OK


def cmd_solve_ext(args) -> int:
    params = {"segments": args.segments, "delta_lambda": args.lambda_step, "max_iters": args.iters}
    sol = recompress.solve_ext(load_instance(args.instance), args.epsilon, args.algo, **params)
    print(f"algo = {args.algo}")
    _print_solution(sol)
    return EXIT_OK


def cmd_oracle(args) -> int:
    res = oracle.grid_solve(load_instance(args.instance), oracle.GridSpec(points=args.grid))
    if not math.isfinite(res.eta):
        raise InfeasibleInstance([], "no mode tuple meets the constraints on the grid")
    print(f"eta = {res.eta:.9g}  ({res.tuples_checked} mode tuples)")
    for line in _decision_lines(res.decisions, res.costs):
        print(line)
    return EXIT_OK


def cmd_gen(args) -> int:
    text = dumps_instance(generate_instance(args.seed, args.k, parse_assignments(args.set)))
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    recs = bench.sweep(args.spec, args.out, args.workers, args.timing)
    bad = sum(r.status != "ok" for r in recs)
    print(f"{len(recs)} rows written to {args.out} ({bad} not ok)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fogdc", description="Compression-aware fog/cloud offloading solvers.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fit", help="fit workload models to a sample file")
    s.add_argument("samples")
    s.add_argument("--kind", choices=[k.value for k in Kind], default=Kind.COMPRESS.value)
    s.set_defaults(fn=cmd_fit)

    s = sub.add_parser("solve", help="min-max cost without fog recompression")
    s.add_argument("instance")
    s.add_argument("--epsilon", type=float, default=1e-3)
    s.set_defaults(fn=cmd_solve)

    s = sub.add_parser("solve-ext", help="min-max cost with fog recompression")
    s.add_argument("instance")
    s.add_argument("--algo", choices=recompress.ALGOS, required=True)
    s.add_argument("--epsilon", type=float, default=1e-3)
    s.add_argument("--segments", type=int, default=9)
    s.add_argument("--lambda-step", type=float, default=5e-3)
    s.add_argument("--iters", type=int, default=500)
    s.set_defaults(fn=cmd_solve_ext)

    s = sub.add_parser("oracle", help="grid-search reference for small instances")
    s.add_argument("instance")
    s.add_argument("--grid", type=int, default=60)
    s.set_defaults(fn=cmd_oracle)

    s = sub.add_parser("gen", help="generate a random instance file")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--set", action="append", default=[], metavar="KEY=VAL")
    s.add_argument("-o", "--output")
    s.set_defaults(fn=cmd_gen)

    s = sub.add_parser("sweep", help="run a sweep file and write CSV")
    s.add_argument("spec")
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--timing", action="store_true", help="record wall times (output no longer reproducible)")
    s.set_defaults(fn=cmd_sweep)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except InfeasibleInstance as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
