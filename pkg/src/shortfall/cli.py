"""Command-line entry point.

    shortfall estimate     --config cfg.json --seed 7 [--out DIR] [--jobs N]
    shortfall optimize     --config cfg.json --seed 7
    shortfall gradient     --config cfg.json --seed 7
    shortfall saa-compare  --config cfg.json --seed 7
    shortfall acceptance   --seed 7 [--only 1,3] [--out DIR]

Any top-level config field can be overridden by a flag of the same name,
with a JSON value, e.g. ``--replications 100`` or ``--n_grid '[100, 1000]'``.
Exit codes: 0 ok, 1 acceptance failure, 2 bad config, 3 no oracle,
4 bound regime violated.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import ConfigError, OracleUnavailable, RegimeViolation

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ORACLE, EXIT_REGIME = 0, 1, 2, 3, 4

_SUBCOMMAND_EXPERIMENTS = {
    "estimate": ("estimate_rate", "estimate_hp"),
    "optimize": ("optimize_rate",),
    "gradient": ("gradient_rate",),
    "saa-compare": ("saa_compare",),
}
_OVERRIDABLE = ("experiment", "model", "loss", "lambda", "schedule", "n_grid", "m_grid",
                "replications", "delta", "batch", "output_dir", "bracket", "theta", "theta0",
                "t0", "inner_schedule", "C4", "C5", "pilot_m")


def _json_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _add_common(p, config_required=True):
    p.add_argument("--config", required=config_required, help="JSON experiment config")
    p.add_argument("--seed", required=True, type=int, help="master seed (mandatory)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker processes (default: available CPUs)")
    p.add_argument("--out", default=None, help="output directory (falls back to SHORTFALL_OUT)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shortfall", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMAND_EXPERIMENTS:
        p = sub.add_parser(name)
        _add_common(p)
        for field in _OVERRIDABLE:
            p.add_argument(f"--{field}", type=_json_value, default=None, dest=f"set_{field}")
    p = sub.add_parser("acceptance", help="run the acceptance criteria and print one line each")
    _add_common(p, config_required=False)
    p.add_argument("--only", default=None, help="comma-separated criterion numbers")
    return parser


def _load(args, command):
    from .experiments import ExperimentConfig

    try:
        with open(args.config) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for field in _OVERRIDABLE:
        v = getattr(args, f"set_{field}")
        if v is not None:
            d[field] = v
    d["seed"] = args.seed
    cfg = ExperimentConfig.from_dict(d)
    if cfg.experiment not in _SUBCOMMAND_EXPERIMENTS[command]:
        raise ConfigError(f"'{command}' cannot run a {cfg.experiment} experiment")
    return cfg


def _run_experiment(args) -> int:
    from .experiments import compare_bounds, run

    cfg = _load(args, args.command)
    result = run(cfg, out=args.out, jobs=args.jobs)
    report = compare_bounds(result.output_dir / "rates.csv")
    for row in report.rows:
        mark = "ok " if row["passed"] else "FAIL"
        print(f"{mark} n={row['n']:>8} m={row['m'] or '-':>7} mse={float(row['empirical_mse']):.4e} "
              f"se={float(row['stderr']):.2e} bound={float(row['bound']):.4e}")
    print(f"wrote {result.output_dir}")
    return EXIT_OK


def _run_acceptance(args) -> int:
    from .acceptance import run_all

    only = None if args.only is None else [int(v) for v in args.only.split(",")]
    out = args.out or os.environ.get("SHORTFALL_OUT")
    results = run_all(seed=args.seed, only=only, out=out, jobs=args.jobs)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "acceptance":
            return _run_acceptance(args)
        return _run_experiment(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleUnavailable as exc:
        print(f"oracle unavailable: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except RegimeViolation as exc:
        print(f"bound regime violated: {exc}", file=sys.stderr)
        return EXIT_REGIME


if __name__ == "__main__":
    sys.exit(main())
