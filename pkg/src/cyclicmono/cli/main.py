# MIT License
#
# Copyright (c) 2024 cyclicmono contributors
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.


import argparse
import logging
import os
import sys

import numpy as np

from cyclicmono.api.aggregate import estimate_beta_aggregate, read_aggregate_csv, select_periods, \
    validate_aggregate, write_aggregate_csv
from cyclicmono.api.checks import run_checks
from cyclicmono.api.config import read_config, to_bool
from cyclicmono.api.errors import DataFormatError, InvalidInputError, NumericalError, UsageError
from cyclicmono.api.estimation import estimate_panel, estimate_panel_matched
from cyclicmono.api.identset import GridAxis, bounded_finite_dgp, nested_support_scan, sample_g_set, \
    scan_identified_set, singleton_diagnostic
from cyclicmono.api.moments import export_terms_csv
from cyclicmono.api.optimizer import EstimatorOptions, format_result, write_result
from cyclicmono.api.paneldata import read_panel, validate, write_panel
from cyclicmono.api.simulate import FULL_STUDY_REPS, FULL_STUDY_SIZES, AggregateDgpConfig, McDgpConfig, \
    render_tables, run_study, simulate_aggregate, simulate_panel, write_tables_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

# flags that must come from the command line or the config file
REQUIRED_FLAGS = {
    "simulate": ["output"],
    "estimate": ["input"],
    "montecarlo": ["output"],
    "idset": ["output"],
    "aggregate": ["input"],
}

GRID_DEFAULTS = {
    "illustration": (0.5, 1.9, 99),
    "bounded": (-1.5, 1.5, 200),
}


class CliParser(argparse.ArgumentParser):

    def error(self, message):
        raise UsageError(message)


def k_grid_list(text):
    try:
        values = tuple(int(v) for v in str(text).replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"k grid must be a comma separated list of integers, found {text!r}")
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("k grid values must be positive")
    return values


def add_common(parser):
    parser.add_argument("--config", help="key = value file of flag defaults (flags given here override it)")
    parser.add_argument("--seed", type=int, default=0, help="random seed")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="parallel workers, results do not depend on this")
    parser.add_argument("--verbose", action="store_true", help="log debug messages")
    parser.add_argument("--quiet", action="store_true", help="only log warnings and errors")


def add_estimator(parser):
    parser.add_argument("--k-grid", type=k_grid_list, default=None,
                        help="candidate neighbour counts for the first stage, e.g. 5,10,20")
    parser.add_argument("--max-iter", type=int, default=5000, help="iteration cap per face")
    parser.add_argument("--method", choices=["subgradient", "lp"], default="subgradient",
                        help="face solver")


def build_parser():
    parser = CliParser(prog="cyclicmono",
                       description="panel multinomial choice estimation from cyclic monotonicity inequalities")
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True
    subparsers = {}

    p = commands.add_parser("simulate", help="simulate a panel (or market data) and write it")
    add_common(p)
    p.add_argument("--output", help="CSV (or .nc for panels) file to write (required)")
    p.add_argument("--n", type=int, default=1000, help="individuals (markets with --aggregate)")
    p.add_argument("--periods", type=int, default=2, help="periods T")
    p.add_argument("--control-shift", type=float, default=0.0,
                   help="utility shift of a binary time-varying control; non-zero adds a z column")
    p.add_argument("--aggregate", action="store_true", help="simulate market shares instead of a panel")
    p.add_argument("--consumers", type=int, default=None,
                   help="consumers per market and period (exact shares when omitted)")
    subparsers["simulate"] = p

    p = commands.add_parser("estimate", help="estimate beta from a panel")
    add_common(p)
    add_estimator(p)
    p.add_argument("--input", help="panel CSV or .nc file (required)")
    p.add_argument("--output", help="result file to write (printed when omitted)")
    p.add_argument("--controls", action="store_true", help="match on the control column z")
    p.add_argument("--terms-output", help="write the moment terms to this CSV file")
    subparsers["estimate"] = p

    p = commands.add_parser("montecarlo", help="run the Monte Carlo study")
    add_common(p)
    add_estimator(p)
    p.add_argument("--output", help="CSV file for the summary table (required)")
    p.add_argument("--n", type=int, nargs="+", default=[250], help="sample sizes")
    p.add_argument("--reps", type=int, default=200, help="repetitions per sample size")
    p.add_argument("--control-shift", type=float, default=0.0, help="utility shift of a time-varying control")
    p.add_argument("--controls", action="store_true", help="estimate with control matching")
    p.add_argument("--full-study", action="store_true",
                   help=f"sizes {', '.join(str(n) for n in FULL_STUDY_SIZES)} with {FULL_STUDY_REPS} repetitions")
    subparsers["montecarlo"] = p

    p = commands.add_parser("idset", help="scan the identified set of a discrete-support design")
    add_common(p)
    p.add_argument("--output", help="CSV file of grid membership (required)")
    p.add_argument("--design", choices=sorted(GRID_DEFAULTS), default="illustration",
                   help="illustration: three covariates on {1, 1/2, ..., 1/s}; "
                        "bounded: one finite and two bounded covariates")
    p.add_argument("--s-points", type=int, nargs="+", default=[2], help="support sizes s")
    p.add_argument("--pairs-budget", type=int, default=100000, help="sampled covariate pairs per support")
    p.add_argument("--grid-min", type=float, default=None, help="lower end of both grid axes")
    p.add_argument("--grid-max", type=float, default=None, help="upper end of both grid axes")
    p.add_argument("--grid-steps", type=int, default=None, help="nodes per grid axis")
    p.add_argument("--bitmap", help="also write the membership raster (.pbm, or .png for a colour map)")
    subparsers["idset"] = p

    p = commands.add_parser("aggregate", help="estimate beta from market shares")
    add_common(p)
    add_estimator(p)
    p.add_argument("--input", help="market CSV file (required)")
    p.add_argument("--output", help="result file to write (printed when omitted)")
    p.add_argument("--interactions", nargs="*", default=[], help="derived covariates such as price*deal")
    p.add_argument("--subsample-periods", type=int, default=None,
                   help="keep this many periods at regular intervals")
    subparsers["aggregate"] = p

    p = commands.add_parser("check", help="run the numerical property checks")
    add_common(p)
    p.add_argument("--quick", action="store_true", help="smaller samples, exact solver on a few planar term sets")
    subparsers["check"] = p
    return parser, subparsers


def apply_config(subparser, path):
    """Install the values of a config file as defaults of a subcommand's flags."""
    actions = {action.dest: action for action in subparser._actions if action.dest != "help"}
    defaults = {}
    for key, value in read_config(path).items():
        action = actions.get(key)
        if action is None or key == "config":
            raise UsageError(f"unknown config key {key!r} in {path}")
        try:
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = to_bool(value)
            elif action.nargs in ("+", "*"):
                convert = action.type or str
                defaults[key] = [convert(v) for v in value.replace(",", " ").split()]
            elif action.type is not None:
                defaults[key] = action.type(value)
            else:
                defaults[key] = value
        except (ValueError, argparse.ArgumentTypeError) as ex:
            raise UsageError(f"config key {key!r}: {ex}")
        if action.choices is not None and defaults[key] not in action.choices:
            raise UsageError(f"config key {key!r}: {value!r} is not one of {sorted(action.choices)}")
    subparser.set_defaults(**defaults)


def parse_args(argv):
    parser, subparsers = build_parser()
    # --config is read before the full parse so that the file can supply any flag
    pre = CliParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and known.command in subparsers:
        apply_config(subparsers[known.command], known.config)
    args = parser.parse_args(argv)
    for dest in REQUIRED_FLAGS.get(args.command, []):
        if getattr(args, dest) is None:
            flag = "--" + dest.replace("_", "-")
            raise UsageError(f"{args.command}: {flag} is required (on the command line or in the config file)")
    return args


def configure_logging(args):
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s - %(levelname)s - %(message)s", datefmt="%H:%M:%S")
    logging.getLogger().setLevel(level)


def estimator_options(args):
    if args.max_iter < 1:
        raise UsageError("--max-iter must be at least 1")
    return EstimatorOptions(max_iter=args.max_iter, seed=args.seed, method=args.method,
                            n_jobs=max(args.threads, 1), k_grid=args.k_grid)


def emit_result(result, output):
    if output:
        print(f"writing {output}")
        write_result(result, output)
    else:
        print(format_result(result), end="")


def cmd_simulate(args):
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    if args.periods < 2:
        raise UsageError("--periods must be at least 2")
    if args.aggregate:
        d = simulate_aggregate(AggregateDgpConfig(C=args.n, T=args.periods, consumers=args.consumers,
                                                  seed=args.seed))
        print(d.summary())
        print(f"writing {args.output}")
        write_aggregate_csv(d, args.output)
    else:
        if args.consumers is not None:
            raise UsageError("--consumers only applies with --aggregate")
        d = simulate_panel(McDgpConfig(n=args.n, T=args.periods, seed=args.seed,
                                       control_shift=args.control_shift))
        print(d.summary())
        print(f"writing {args.output}")
        write_panel(d, args.output)
    return EXIT_OK


def cmd_estimate(args):
    opts = estimator_options(args)
    d = read_panel(args.input)
    report = validate(d)
    if not report.ok:
        print(report, file=sys.stderr)
        return EXIT_DATA
    if args.controls and not d.has_controls:
        raise UsageError(f"--controls needs a z column, {args.input} has none")
    print(d.summary())
    if args.controls:
        result, terms = estimate_panel_matched(d, opts)
    else:
        result, terms = estimate_panel(d, opts)
    if args.terms_output:
        print(f"writing {args.terms_output}")
        export_terms_csv(terms, args.terms_output)
    emit_result(result, args.output)
    return EXIT_OK


def cmd_montecarlo(args):
    sizes = list(FULL_STUDY_SIZES) if args.full_study else args.n
    reps = FULL_STUDY_REPS if args.full_study else args.reps
    if any(n < 1 for n in sizes):
        raise UsageError("--n values must be at least 1")
    if reps < 2:
        raise UsageError("--reps must be at least 2")
    if args.controls and args.control_shift == 0.0:
        raise UsageError("--controls needs a non-zero --control-shift")
    opts = estimator_options(args)
    cfg = McDgpConfig(n=sizes[0], seed=args.seed, control_shift=args.control_shift)
    tables = run_study(sizes, reps, cfg, opts, n_jobs=max(args.threads, 1), matched=args.controls)
    print(render_tables(tables), end="")
    print(f"writing {args.output}")
    write_tables_csv(tables, args.output)
    return EXIT_OK


def numbered_path(path, s, count):
    if count == 1:
        return path
    root, ext = os.path.splitext(path)
    return f"{root}_s{s}{ext}"


def cmd_idset(args):
    lower, upper, steps = GRID_DEFAULTS[args.design]
    lower = lower if args.grid_min is None else args.grid_min
    upper = upper if args.grid_max is None else args.grid_max
    steps = steps if args.grid_steps is None else args.grid_steps
    if steps < 1 or not lower <= upper:
        raise UsageError("the grid needs --grid-steps >= 1 and --grid-min <= --grid-max")
    if args.pairs_budget < 1:
        raise UsageError("--pairs-budget must be at least 1")
    axes = (GridAxis(1, lower, upper, steps), GridAxis(2, lower, upper, steps))

    if args.design == "bounded":
        dgp = bounded_finite_dgp()
        grids = {0: scan_identified_set(sample_g_set(dgp, args.pairs_budget, args.seed), axes)}
        truth = dgp.beta / dgp.beta[0]
    else:
        if any(s < 1 for s in args.s_points):
            raise UsageError("--s-points values must be at least 1")
        grids = nested_support_scan(sorted(set(args.s_points)), args.pairs_budget, args.seed, axes)
        truth = np.ones(3)
    for s, grid in grids.items():
        label = f"s={s}" if args.design == "illustration" else "bounded design"
        print(f"{label}: {grid.member_count} member nodes of {grid.member.size}, area {grid.area:.6g}, "
              f"singleton {'yes' if singleton_diagnostic(grid) else 'no'}, "
              f"truth member {'yes' if grid.contains(truth[1:]) else 'no'}")
        path = numbered_path(args.output, s, len(grids))
        print(f"writing {path}")
        grid.write_csv(path)
        if args.bitmap:
            path = numbered_path(args.bitmap, s, len(grids))
            print(f"writing {path}")
            grid.write_bitmap(path)
    return EXIT_OK


def cmd_aggregate(args):
    opts = estimator_options(args)
    d = read_aggregate_csv(args.input, args.interactions)
    if args.subsample_periods is not None:
        d = select_periods(d, args.subsample_periods)
    report = validate_aggregate(d)
    if not report.ok:
        print(report, file=sys.stderr)
        return EXIT_DATA
    print(d.summary())
    emit_result(estimate_beta_aggregate(d, opts), args.output)
    return EXIT_OK


def cmd_check(args):
    results = run_checks(quick=args.quick, seed=args.seed)
    for result in results:
        print(result)
    return EXIT_OK if all(result.passed for result in results) else EXIT_NUMERICAL


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "montecarlo": cmd_montecarlo,
    "idset": cmd_idset,
    "aggregate": cmd_aggregate,
    "check": cmd_check,
}


def main(argv=None):
    """Run one subcommand; the return value is the process exit code."""
    try:
        args = parse_args(argv)
        configure_logging(args)
        return COMMANDS[args.command](args)
    except (UsageError, InvalidInputError, OSError) as ex:
        print(f"usage error: {ex}", file=sys.stderr)
        return EXIT_USAGE
    except DataFormatError as ex:
        print(f"data error: {ex}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as ex:
        print(f"numerical error: {ex}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == '__main__':
    sys.exit(main())
