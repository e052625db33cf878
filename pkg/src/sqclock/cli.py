"""Command-line entry point: ``sqclock {fig1,fig2,qnd-demo,qfi-table,sweep}``.

Exit codes: 0 success, 1 output error, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys

from . import scenarios
from .qnd import QndUnderflowError
from .ramsey import NoMinimumError

log = logging.getLogger("sqclock")

EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--nbar", type=float, default=None,
                        help="mean atom number (default 1e5; qfi-table: N of the Fock mode)")
    common.add_argument("--sigma2", type=float, default=None,
                        help="variance of the total atom number (default: equal to --nbar)")
    common.add_argument("--gamma", type=float, action="append", default=[],
                        help="squeezing strength alpha^2 Omega^2 M; repeat for several curves")
    common.add_argument("--theta-min", type=float, default=-math.pi / 2)
    common.add_argument("--theta-max", type=float, default=math.pi)
    common.add_argument("--theta-count", type=int, default=361)
    common.add_argument("--m", type=int, default=1, help="number of repeated measurements")
    common.add_argument("--records", type=int, default=0,
                        help="Monte Carlo QND records per gamma (0: analytic route only)")
    common.add_argument("--alpha", type=float, default=None,
                        help="probe amplitude; rounds are derived from gamma (default: fixed --rounds)")
    common.add_argument("--rounds", type=int, default=100, help="QND rounds per record when --alpha is unset")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1, help="processes for Monte Carlo records")
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--paper-scale", action="store_true",
                        help="run Monte Carlo at the full atom number instead of 1e4")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sqclock", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="scenario", required=True)
    helps = {
        "fig1": "sensitivity vs theta for several gammas",
        "fig2": "optimal theta and sensitivity vs gamma",
        "qnd-demo": "per-record QND squeezing summary",
        "qfi-table": "quantum Fisher information of Fock-mixture inputs",
        "sweep": "sensitivity vs theta for user gammas",
    }
    for name in scenarios.SCENARIOS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def config_from_args(args) -> scenarios.ScenarioConfig:
    n_mean = args.nbar if args.nbar is not None else (
        scenarios.DESK_N_MEAN if args.scenario == "qnd-demo" and not args.paper_scale
        else scenarios.FULL_N_MEAN)
    return scenarios.ScenarioConfig(
        scenario=args.scenario, n_mean=n_mean, sigma2=args.sigma2, gamma_list=tuple(args.gamma),
        theta_grid=(args.theta_min, args.theta_max, args.theta_count), m=args.m,
        records=args.records, alpha=args.alpha, rounds=args.rounds, seed=args.seed,
        paper_scale=args.paper_scale, workers=args.workers, output_path=args.out,
        format=args.format,
    ).validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
    except scenarios.ConfigError as e:
        parser.print_usage(sys.stderr)
        print(f"sqclock: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("running %s with n_mean=%g sigma2=%g records=%d", cfg.scenario, cfg.n_mean,
             cfg.sigma2, cfg.records)
    try:
        table = scenarios.run(cfg)
    except (NoMinimumError, QndUnderflowError, ArithmeticError) as e:
        print(f"sqclock: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    try:
        text = scenarios.emit(table, cfg.format, cfg.output_path)
    except OSError as e:
        print(f"sqclock: {e}", file=sys.stderr)
        return EXIT_IO
    if cfg.output_path is None:
        sys.stdout.write(text)
    if table.checks:
        log.info("checks: %s", table.checks)
    return 0


if __name__ == "__main__":
    sys.exit(main())
