"""Command line entry point: ``uavcollect {run,sweep,compare,gen}``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import experiments as ex
from .io import ScenarioParseError, dump_scenario, generate_scenario, load_scenario
from .model import ScenarioError

OUT_ENV = "UAVCOLLECT_OUT"


def _scenario(args):
    if args.scenario:
        scn = load_scenario(args.scenario)
    else:
        scn = generate_scenario(args.seed, args.devices)
    changes = {}
    if args.delta is not None:
        changes["delta"] = args.delta
        if args.segments is None:
            changes["n_segments"] = None
    if args.segments is not None:
        changes["n_segments"] = args.segments
    return scn.replace(**changes) if changes else scn


def _config(args, scheme=None):
    return ex.RunConfig(
        scheme=scheme or args.scheme,
        out_dir=args.out,
        tol=args.tol,
        lam=args.lam,
        max_iter=args.max_iter,
        dump_dir=args.dump_conic,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavcollect", description="UAV data collection with OMA and NOMA uplinks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario YAML file (default: random scenario from --seed)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--devices", type=int, default=3, help="device count for generated scenarios")
    common.add_argument("--out", default=os.environ.get(OUT_ENV, "out"),
                        help=f"output directory (default: ${OUT_ENV} or ./out)")
    common.add_argument("--delta", type=float, help="segment length cap in metres")
    common.add_argument("--segments", type=int, help="number of path segments")
    common.add_argument("--tol", type=float, help="outer stopping threshold (default: scenario sca_tol)")
    common.add_argument("--lambda", dest="lam", type=float, help="initial decoding-order penalty weight")
    common.add_argument("--max-iter", type=int, default=100)
    common.add_argument("--dump-conic", metavar="DIR", help="write every convex subproblem to DIR")

    p = sub.add_parser("run", parents=[common], help="solve one scheme")
    p.add_argument("--scheme", choices=ex.SCHEMES, default="oma2")

    p = sub.add_parser("sweep", parents=[common], help="sweep an energy budget")
    p.add_argument("--scheme", nargs="+", choices=ex.SCHEMES, default=["noma", "oma2", "oma1"])
    p.add_argument("--param", choices=ex.SWEEP_PARAMS, default="uav_energy")
    p.add_argument("--values", type=float, nargs="*", default=[], help="ascending values in joules")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("compare", parents=[common], help="run several schemes on one scenario")
    p.add_argument("--scheme", nargs="+", choices=ex.SCHEMES, default=list(ex.SCHEMES))

    p = sub.add_parser("gen", help="write a random scenario file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--devices", type=int, default=3)
    p.add_argument("--out", default="-", help="output file ('-' for stdout)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.verb == "gen":
            text = dump_scenario(generate_scenario(args.seed, args.devices))
            if args.out == "-":
                sys.stdout.write(text)
            else:
                ex.write_atomic(args.out, text)
            return ex.EXIT_OK
        scn = _scenario(args)
        if args.verb == "run":
            code = ex.run(scn, _config(args))
            print(open(os.path.join(args.out, "summary.json")).read(), end="")
            return code
        if args.verb == "sweep":
            rows = ex.sweep(scn, _config(args, args.scheme[0]), args.param, args.values, args.scheme, args.workers)
            if any(r[-1] == "infeasible" for r in rows):
                return ex.EXIT_INFEASIBLE
            return ex.EXIT_SOLVER if any(r[-1] != "ok" for r in rows) else ex.EXIT_OK
        if args.verb == "compare":
            code = ex.compare(scn, _config(args, args.scheme[0]), args.scheme)
            print(open(os.path.join(args.out, "compare.csv")).read(), end="")
            return code
    except (ScenarioError, ScenarioParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ex.EXIT_INFEASIBLE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ex.EXIT_IO
    return ex.EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
