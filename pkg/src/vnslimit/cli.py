"""Command line entry point: ``vnslimit <subcommand> [options]``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 validation failure.
"""
from __future__ import annotations

import argparse
import sys

from .fluid import CFLError, StokesError
from .grid import DomainError
from .scenario import ConfigError, ScenarioConfig

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3


def _config(args) -> ScenarioConfig:
    overrides = list(args.set or [])
    if getattr(args, "out", None):
        overrides.append(f'output.dir="{args.out}"')
    return ScenarioConfig.from_toml(args.config, overrides)


def _cmd_run_vns(args):
    from .experiments import run_vns
    out = run_vns(_config(args))
    print(f"run written to {out}")
    return EXIT_OK


def _cmd_run_limit(args):
    from .experiments import run_limit
    out = run_limit(_config(args))
    print(f"run written to {out}")
    return EXIT_OK


def _cmd_sweep(args):
    from .experiments import sweep_eps
    out, rep = sweep_eps(_config(args), synthetic=args.synthetic)
    for row in rep.rows():
        print("eps={eps:<8g} total={total_error:.4e} u={u_err_L2:.4e} rho={rho_err_Hm1:.4e} "
              "gap={brinkman_gravity_gap:.4e}".format(**row))
    print("slope", "n/a" if rep.slope is None else f"{rep.slope:.2f}")
    print(f"sweep written to {out}")
    return EXIT_OK


def _cmd_check_egc(args):
    from .experiments import check_egc
    res = check_egc(args.L, args.R, args.T, args.eps, args.source, args.resolution, args.json)
    print(res.to_json())
    return EXIT_OK if res.satisfied else EXIT_VALIDATION


def _cmd_validate(args):
    from .validation import run_all
    results = run_all()
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  value={r.value:.3e}  tol={r.tolerance:.1e}  {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vnslimit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def run_args(sp):
        sp.add_argument("--config", help="TOML scenario file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key by dotted path, e.g. physics.eps=0.05")
        sp.add_argument("--out", help="output directory (same as output.dir)")

    sp = sub.add_parser("run-vns", help="coupled kinetic-fluid run")
    run_args(sp)
    sp.set_defaults(func=_cmd_run_vns)
    sp = sub.add_parser("run-limit", help="limit density-fluid run")
    run_args(sp)
    sp.set_defaults(func=_cmd_run_limit)
    sp = sub.add_parser("sweep-eps", help="eps sweep against the limit run")
    run_args(sp)
    sp.add_argument("--synthetic", action="store_true",
                    help="skip the solvers and inject errors eps^0.5 (plumbing check)")
    sp.set_defaults(func=_cmd_sweep)
    sp = sub.add_parser("check-egc", help="exit geometric condition on a phase-space box")
    sp.add_argument("--L", type=float, required=True)
    sp.add_argument("--R", type=float, required=True)
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--source", default="trivial", help='"trivial" or a run directory')
    sp.add_argument("--resolution", type=int, default=21)
    sp.add_argument("--json", help="also write the result to this file")
    sp.set_defaults(func=_cmd_check_egc)
    sp = sub.add_parser("validate", help="run the oracle suite")
    sp.set_defaults(func=_cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CFLError, StokesError, DomainError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
