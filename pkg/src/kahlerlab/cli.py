"""Command-line entry point: ``kahlerlab <subcommand> [--config PATH] [--out DIR] ...``.

Exit status: 0 on success, 1 when a run's own checks fail, 2 for configuration
errors and 3 for computational errors (positivity loss, non-convergence, ...).
"""
from __future__ import annotations

import argparse
import itertools
import logging
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, schema_markdown
from .errors import ConfigError
from .experiments import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK, run, sweep

SUBCOMMANDS = {
    "geodesic": "geodesic",
    "jacobi": "jacobi",
    "curvature": "curvature-probe",
    "calabi-distance": "calabi-distance",
    "otto-flow": "otto-flow",
    "toric-check": "toric-check",
    "selftest": "selftest",
}


def _common(p: argparse.ArgumentParser, multi_config: bool = False) -> None:
    if multi_config:
        p.add_argument("--config", action="append", default=[], metavar="PATH",
                       help="config file (INI or .json); repeat for several runs")
    else:
        p.add_argument("--config", metavar="PATH", help="config file (INI or .json)")
    p.add_argument("--out", metavar="DIR", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override run.seed")
    p.add_argument("--parallel", type=int, default=1, metavar="K",
                   help="worker processes (used by sweep)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a single config value")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kahlerlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kahlerlab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind in SUBCOMMANDS.items():
        _common(sub.add_parser(name, help=f"run a {kind} experiment"))
    sw = sub.add_parser("sweep", help="run several configurations and merge their summaries")
    _common(sw, multi_config=True)
    sw.add_argument("--vary", action="append", default=[], metavar="SECTION.KEY=V1,V2,...",
                    help="sweep a key over values (cartesian product over repeats)")
    sub.add_parser("schema", help="print the configuration schema")
    return parser


def _parse_sets(items) -> dict:
    out = {}
    for item in items:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError([f"--set {item!r}: expected SECTION.KEY=VALUE"])
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _load(path, kind: str | None, args) -> RunConfig:
    overrides = _parse_sets(args.set)
    if kind:
        overrides["run.kind"] = kind
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if path:
        return RunConfig.from_file(path, **overrides)
    return RunConfig.from_mapping({}, **overrides)


def _expand(base: list[RunConfig], vary) -> list[RunConfig]:
    axes = []
    for item in vary:
        if "=" not in item:
            raise ConfigError([f"--vary {item!r}: expected SECTION.KEY=V1,V2,..."])
        key, values = item.split("=", 1)
        axes.append([(key.strip(), v.strip()) for v in values.split(",") if v.strip()])
    if not axes:
        return base
    out = []
    for cfg in base:
        for combo in itertools.product(*axes):
            out.append(cfg.with_overrides(**dict(combo)))
    return out


def _print_table(summary: dict) -> None:
    for key in sorted(summary):
        print(f"  {key}: {summary[key]}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "schema":
        print(schema_markdown())
        return EXIT_OK
    try:
        if args.command == "sweep":
            configs = []
            for path in args.config:
                try:
                    configs += _expand([_load(path, None, args)], args.vary)
                except ConfigError as exc:
                    print(f"{path}: {exc}", file=sys.stderr)
                    configs.append(exc)
            out = Path(args.out or "runs/sweep")
            rows = sweep(configs, out, max(1, args.parallel))
            for r in rows:
                print(f"run {r['run']:03d} {r['kind']:<16} {r['status']:<7} {r['error']}")
            print(f"{len(rows)} runs, summary in {out / 'sweep_summary.csv'}")
            return EXIT_OK
        cfg = _load(args.config, SUBCOMMANDS[args.command], args)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for p in exc.problems:
            print(f"  {p}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or f"runs/{cfg.kind}-{cfg.hash[:12]}")
    code, summary = run(cfg, out)
    if summary.get("status") == "error":
        print(f"{cfg.kind} failed: {summary['error']}", file=sys.stderr)
        return code
    if cfg.kind == "selftest":
        with open(out / "selftest.csv") as fh:
            next(fh)
            for line in fh:
                name, value, tol, passed = line.strip().split(",")
                print(f"{'PASS' if passed == 'yes' else 'FAIL'}  {name:<32} {value} (tol {tol})")
    print(f"{cfg.kind}: {summary['status']} -> {out}")
    _print_table({k: v for k, v in summary.items() if k not in ("status", "failed_checks")})
    if code == EXIT_CHECK_FAILED:
        print("failed checks: " + ", ".join(summary["failed_checks"]), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
