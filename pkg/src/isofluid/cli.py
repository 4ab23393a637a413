"""Command-line entry point.

Subcommands: simulate, sweep, longtime, korteweg, tau, check.
Common flags: --config PATH (JSON), --out DIR, --seed U64, --threads N,
--filter NAME.  CLI flags override file keys.

Exit codes: 0 ok, 1 invariant violation, 2 run failure, 3 bad config.
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import BadConfig, ExperimentConfig, run_experiment


def _common(sub):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--seed", type=int, help="RNG seed")
    sub.add_argument("--threads", type=int, help="parallel ladder points")
    sub.add_argument("--t-end", type=float, dest="t_end", help="final time")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="isofluid", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="single run of the regularized system")
    _common(sp)

    sp = sub.add_parser("sweep", help="parameter-limit ladder")
    _common(sp)
    sp.add_argument(
        "--axis",
        choices=["delta", "eta", "drag_ell"],
        default="delta",
        help="which parameter family the ladder scales",
    )

    sp = sub.add_parser("longtime", help="long-horizon Gaussian-attraction run")
    _common(sp)

    sp = sub.add_parser("korteweg", help="log-NLS vs hydrodynamic cross-check")
    _common(sp)

    sp = sub.add_parser("tau", help="scaling-ODE table (t, tau, taudot, residual)")
    _common(sp)

    sp = sub.add_parser("check", help="invariant/identity gate")
    _common(sp)
    sp.add_argument("--filter", help="run only matching families")
    return ap


_KIND_BY_COMMAND = {
    "simulate": "simulate",
    "longtime": "longtime",
    "korteweg": "korteweg_crosscheck",
    "tau": "tau",
    "check": "check",
}


def config_from_args(args) -> ExperimentConfig:
    raw: dict = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
    if args.command == "sweep":
        raw["kind"] = f"sweep_{args.axis}"
    else:
        raw.setdefault("kind", _KIND_BY_COMMAND[args.command])
        if raw["kind"] != _KIND_BY_COMMAND[args.command]:
            raise BadConfig(
                f"config kind {raw['kind']!r} does not match command {args.command!r}"
            )
    if args.out is not None:
        raw["out_dir"] = args.out
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.threads is not None:
        raw["threads"] = args.threads
    if args.t_end is not None:
        raw["t_end"] = args.t_end
    if getattr(args, "filter", None):
        raw["filter"] = args.filter
    return ExperimentConfig.from_dict(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except (BadConfig, OSError, json.JSONDecodeError) as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return 3
    try:
        return run_experiment(config)
    except BadConfig as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
