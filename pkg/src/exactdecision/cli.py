"""Command-line entry point: analyze, decide, sweep, verify."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .combinatorics import InvariantError
from .criteria import CRITERIA, ConfigError, resolve_design, sweep
from .likelihood import PosteriorError
from .records import RunConfig, TrialRecord, sepsis_trial
from .report import analyze, analyze_csv, decide_csv, explain, to_json, write_sweep
from .rules import RULE_NAMES, UnknownRuleError
from .verify import run_suites, sum_from_one

log = logging.getLogger("exactdecision")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--efficacy-weight", help="weight on efficacious participants (default 1/2)")
    p.add_argument("--unsafe-weight", help="weight on unsafe participants (default 1)")
    p.add_argument("--prior", choices=("uniform", "point", "file"))
    p.add_argument("--prior-point", type=int, nargs=4, metavar=("T11", "T10", "T01", "T00"))
    p.add_argument("--prior-file")
    p.add_argument("--m-policy", choices=("half", "floor"))
    p.add_argument("--digits", type=int)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--workers", type=int)


def _add_trial_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trial", help="one-record JSON or CSV file")
    p.add_argument("--sepsis", action="store_true", help="use the bundled sepsis trial")
    for flag in ("n", "m", "xi1", "xi0", "xc1", "xc0"):
        p.add_argument(f"--{flag}", type=int)
    p.add_argument("--label")


def _config(args: argparse.Namespace) -> RunConfig:
    base = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {
        "efficacy_weight": args.efficacy_weight,
        "unsafe_weight": args.unsafe_weight,
        "prior": args.prior,
        "prior_point": tuple(args.prior_point) if args.prior_point else None,
        "prior_file": args.prior_file,
        "m_policy": args.m_policy,
        "digits": args.digits,
        "format": args.format,
        "workers": args.workers,
        "top_k": getattr(args, "top", None),
    }
    return base.merged(overrides).validate()


def _trial(args: argparse.Namespace) -> TrialRecord:
    if args.sepsis:
        return sepsis_trial()
    if args.trial:
        return TrialRecord.load(args.trial).validate()
    values = {k: getattr(args, k) for k in ("n", "m", "xi1", "xi0", "xc1", "xc0")}
    missing = [f"--{k}" for k, v in values.items() if v is None]
    if missing:
        raise InvariantError(f"trial needs {', '.join(missing)} (or --trial FILE / --sepsis)")
    return TrialRecord(
        values["n"], values["m"], values["xi1"], values["xi0"], values["xc1"], values["xc0"], args.label
    ).validate()


def cmd_analyze(args: argparse.Namespace) -> int:
    config = _config(args)
    doc = analyze(_trial(args), config)
    sys.stdout.write(analyze_csv(doc) if config.format == "csv" else to_json(doc))
    return 0


def cmd_decide(args: argparse.Namespace) -> int:
    config = _config(args)
    doc = explain(args.rule, _trial(args), config)
    sys.stdout.write(decide_csv(doc) if config.format == "csv" else to_json(doc))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    if args.format is None and not args.config:
        args.format = "csv"
    config = _config(args)
    n_values = list(range(args.n_min, args.n_max + 1))
    if args.even_only:
        n_values = [n for n in n_values if n % 2 == 0]
    if not n_values:
        raise ConfigError("n_range", f"no sample sizes in {args.n_min}..{args.n_max}")
    for n in n_values:
        resolve_design(n, config.m_policy)
    criteria = tuple(args.criteria.split(",")) if args.criteria else CRITERIA
    for c in criteria:
        if c not in CRITERIA:
            raise ConfigError("criteria", f"unknown criterion {c!r}; valid: {', '.join(CRITERIA)}")
    rows = sweep(
        n_values,
        config.m_policy,
        config.spec,
        config.prior_for if config.prior != "uniform" else None,
        criteria=criteria,
        workers=config.workers,
    )
    svg_rules = RULE_NAMES if args.svg_coinflip else tuple(r for r in RULE_NAMES if r != "coinflip")
    for path in write_sweep(rows, args.out, config.format, config.digits, criteria, args.svg, svg_rules):
        log.info("wrote %s", path)
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    if args.inject_sum_from_one:
        with sum_from_one():
            results = run_suites(args.max_n)
    else:
        results = run_suites(args.max_n)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exactdecision",
        description="Exact finite-sample likelihood and decision rules for two-arm binary trials.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="likelihood, posterior, Fisher test and every rule for one trial")
    _add_trial_flags(p)
    _add_config_flags(p)
    p.add_argument("--top", type=int, help="rows in the likelihood table (default 5)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("decide", help="one rule's decision with its rationale")
    p.add_argument("--rule", required=True, help=f"one of {', '.join(RULE_NAMES)}")
    _add_trial_flags(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("sweep", help="score every rule under each criterion across sample sizes")
    p.add_argument("--n-min", type=int, required=True)
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--even-only", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--criteria", help=f"comma list from {','.join(CRITERIA)}")
    p.add_argument("--svg", type=Path, help="directory for one SVG chart per criterion")
    p.add_argument("--svg-coinflip", action="store_true", help="draw the coin-flip series in charts")
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the invariant and oracle suites")
    p.add_argument("--max-n", type=int, help="cap every suite at this n")
    p.add_argument("--inject-sum-from-one", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvariantError, UnknownRuleError, PosteriorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
