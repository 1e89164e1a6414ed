"""Command-line entry point: ``frontier-match <subcommand> --config run.json``.

Exit codes: 0 success, 1 config error, 2 data error, 3 at least one cell failed.
Set ``FRONTIER_MATCH_LOG`` to error, warn, info or debug for log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .data_model import serialize_dataset, validate
from .errors import ConfigError, FrontierMatchError
from .pipeline import (
    DataValidationError,
    RunConfig,
    build_frontier,
    build_sample,
    load_panel,
    run_pipeline,
    write_descriptives,
)
from .simulate import SCHEMA as SIMULATED_SCHEMA
from .simulate import GeneratorConfig, simulate_panel

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CELL = 0, 1, 2, 3

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("frontier_match")


def _setup_logging() -> None:
    name = os.environ.get("FRONTIER_MATCH_LOG", "warn").lower()
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(LOG_LEVELS.get(name, logging.WARNING))


def _out_dir(args, config: RunConfig) -> Path:
    out = Path(args.out) if args.out else config.output_dir
    if out is None:
        raise ConfigError("no output directory: pass --out or set output_dir")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    return out


def _load(args) -> RunConfig:
    config = RunConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    return config


def _checked_panel(config: RunConfig, strict: bool):
    panel, _ = load_panel(config)
    report = validate(panel)
    if not report.ok or (strict and report.warnings):
        raise DataValidationError(report)
    return panel


def cmd_validate(args) -> int:
    config = _load(args)
    panel, digest = load_panel(config)
    report = validate(panel)
    print(f"{len(panel.rows)} rows, {len(panel.by_household())} households, {len(panel.villages)} villages; sha256 {digest}")
    print(report.summary())
    if not report.ok or (args.strict and report.warnings):
        return EXIT_DATA
    return EXIT_OK


def cmd_build_sample(args) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    panel = _checked_panel(config, args.strict)
    for spec in config.samples:
        sample = build_sample(panel, spec)
        (out / f"{spec.name}.csv").write_text(sample.to_csv(), encoding="utf-8", newline="")
        print(f"{spec.name}: {sample.n} units ({sample.n_treated} treated)")
    return EXIT_OK


def cmd_frontier(args) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    panel = _checked_panel(config, args.strict)
    failed = False
    for spec in config.samples:
        sample = build_sample(panel, spec)
        for metric in config.metrics:
            name = f"{spec.name}__{metric.label}"
            try:
                frontier = build_frontier(sample, metric, config)
            except FrontierMatchError as exc:
                log.error("%s: %s", name, exc)
                failed = True
                continue
            if args.strict and frontier.monotonicity_violations:
                log.error("%s: %d monotonicity violation(s)", name, frontier.monotonicity_violations)
                failed = True
            (out / f"{name}.csv").write_text(frontier.to_csv(), encoding="utf-8", newline="")
    return EXIT_CELL if failed else EXIT_OK


def _report_cells(results) -> int:
    for r in sorted(results, key=lambda r: r.name):
        extra = f"  att={r.summary['att']:.4f} se={r.summary['std_error']:.4f}" if "att" in r.summary else ""
        print(f"{r.status:>16}  {r.name}{extra}{'  (' + r.note + ')' if r.note else ''}")
    return EXIT_CELL if any(r.status == "failed" for r in results) else EXIT_OK


def cmd_estimate(args) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    config.sweep_years = False
    config.sweep_villages = False
    return _report_cells(run_pipeline(config, out, args.jobs, args.strict))


def cmd_describe(args) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    panel = _checked_panel(config, args.strict)
    for name in write_descriptives(panel, config, out):
        print(name)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if not args.out:
        raise ConfigError("simulate needs --out FILE")
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        doc = doc.get("simulate", doc)
    seed = args.seed if args.seed is not None else doc.get("seed", 0)
    gen = GeneratorConfig.from_json(doc, seed=seed)
    sim = simulate_panel(gen)
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(serialize_dataset(sim.panel), encoding="utf-8", newline="")
        schema_path = out.with_suffix(".schema.json")
        schema_path.write_text(json.dumps(SIMULATED_SCHEMA.to_json(), indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc}") from None
    print(f"wrote {len(sim.panel.rows)} rows to {out} (schema: {schema_path})")
    return EXIT_OK


def cmd_run(args) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    code = _report_cells(run_pipeline(config, out, args.jobs, args.strict))
    panel, _ = load_panel(config)
    write_descriptives(panel, config, out / "descriptives")
    return code


COMMANDS = {
    "validate": (cmd_validate, "parse and validate the input panel"),
    "build-sample": (cmd_build_sample, "write each configured matching sample as CSV"),
    "frontier": (cmd_frontier, "write the frontier of every sample x metric"),
    "estimate": (cmd_estimate, "frontiers, balanced-subset selection and ATT per cell"),
    "describe": (cmd_describe, "diffusion, adopter categories, fractionalization, group tables"),
    "simulate": (cmd_simulate, "generate a synthetic panel CSV"),
    "run": (cmd_run, "full pipeline including sweeps, descriptives and manifest"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frontier-match", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=name != "simulate", help="JSON run config")
        p.add_argument("--out", help="output directory (output file for simulate)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="cells to run concurrently")
        p.add_argument("--strict", action="store_true", help="treat warnings as failures")
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    handler = COMMANDS[args.command][0]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FrontierMatchError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
