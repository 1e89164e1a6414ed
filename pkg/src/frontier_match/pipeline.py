"""Configured batch runs: panel -> samples -> frontiers -> estimates -> report files.

A run is split into independent cells (sample x metric x filter). Each cell
writes into its own directory; the manifest is written once at the end.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import io
import json
import logging
import os
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .data_model import CovariateSchema, PanelDataset, read_dataset, serialize_dataset, validate
from .descriptives import (
    diffusion_level,
    diffusion_series,
    group_comparison,
    household_categories,
    village_fractionalization,
    village_means,
)
from .errors import ConfigError, DegenerateSampleError, FrontierMatchError, InsufficientDataError
from .estimation import (
    DEFAULT_ALPHA,
    att_along_frontier,
    balance_report,
    estimate_att,
    select_balanced_subset,
)
from .frontier import Frontier, build_frontier_ami, build_frontier_l1
from .imbalance_metrics import BinningSpec
from .sample_builder import (
    DERIVED_COVARIATES,
    MatchingSample,
    PoolingConfig,
    build_full_pooling,
    build_partial_pooling,
    subset_by,
)
from .simulate import SCHEMA as SIMULATED_SCHEMA
from .simulate import GeneratorConfig, simulate_panel

log = logging.getLogger(__name__)

SAMPLE_KINDS = ("full_pooling", "partial_pooling")


class DataValidationError(FrontierMatchError):
    def __init__(self, report):
        self.report = report
        super().__init__(report.summary())


@dataclass(frozen=True)
class MetricSpec:
    kind: str
    allow_treated_pruning: bool = False

    @property
    def label(self) -> str:
        if self.kind == "L1":
            return "L1"
        return "AMI_treated" if self.allow_treated_pruning else "AMI_control"


@dataclass(frozen=True)
class SampleSpec:
    name: str
    kind: str
    pooling: PoolingConfig


@dataclass
class RunConfig:
    schema: CovariateSchema
    samples: list[SampleSpec]
    metrics: list[MetricSpec]
    input_path: Path | None = None
    survey_years: tuple[int, ...] = ()
    drop_invalid: bool = False
    binning: dict = field(default_factory=dict)
    alpha: float = DEFAULT_ALPHA
    sweep_years: bool | list[int] = False
    sweep_villages: bool | list[str] = False
    output_dir: Path | None = None
    seed: int = 0
    reestimate_covariance: bool = False
    se_method: str = "analytic"
    bootstrap_reps: int = 500
    generator: dict | None = None
    describe: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_json(cls, doc: dict, base_dir: Path | None = None) -> "RunConfig":
        base_dir = base_dir or Path.cwd()
        try:
            if "schema" in doc:
                schema = CovariateSchema.from_json(doc["schema"])
            elif "simulate" in doc:
                schema = SIMULATED_SCHEMA
            else:
                raise ConfigError("config needs a 'schema' (or a 'simulate' block)")
            samples = []
            for name, s in doc.get("samples", {}).items():
                kind = s.get("kind", "full_pooling")
                if kind not in SAMPLE_KINDS:
                    raise ConfigError(f"sample {name!r}: kind must be one of {SAMPLE_KINDS}")
                # covariates default to every schema column
                samples.append(SampleSpec(name, kind, PoolingConfig.from_json({"covariates": list(schema.names), **s})))
            metrics = [
                MetricSpec(m["metric"], bool(m.get("allow_treated_pruning", m["metric"] == "AMI")))
                for m in doc.get("metrics", [{"metric": "AMI", "allow_treated_pruning": True}])
            ]
            sweeps = doc.get("sweeps", {})
            cfg = cls(
                schema=schema,
                samples=samples,
                metrics=metrics,
                input_path=(base_dir / doc["input"]) if doc.get("input") else None,
                survey_years=tuple(doc.get("survey_years", ())),
                drop_invalid=bool(doc.get("drop_invalid", False)),
                binning=dict(doc.get("binning", {})),
                alpha=float(doc.get("alpha", DEFAULT_ALPHA)),
                sweep_years=sweeps.get("years", False),
                sweep_villages=sweeps.get("villages", False),
                output_dir=(base_dir / doc["output_dir"]) if doc.get("output_dir") else None,
                seed=int(doc.get("seed", 0)),
                reestimate_covariance=bool(doc.get("reestimate_covariance", False)),
                se_method=doc.get("se_method", "analytic"),
                bootstrap_reps=int(doc.get("bootstrap_reps", 500)),
                generator=doc.get("simulate"),
                describe=dict(doc.get("describe", {})),
                raw=doc,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_json(doc, path.parent)

    def check(self) -> None:
        names = set(self.schema.names) | set(DERIVED_COVARIATES)
        for s in self.samples:
            missing = [c for c in s.pooling.covariate_subset if c not in names]
            if missing:
                raise ConfigError(f"sample {s.name!r} references unknown covariates {missing}")
            if s.kind == "partial_pooling" and not s.pooling.survey_years:
                raise ConfigError(f"sample {s.name!r}: partial pooling needs survey_years")
        for m in self.metrics:
            if m.kind not in ("L1", "AMI"):
                raise ConfigError(f"unknown metric {m.kind!r}")
            if m.kind == "L1" and m.allow_treated_pruning:
                raise ConfigError("the L1 frontier never prunes treated units")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.se_method not in ("analytic", "bootstrap"):
            raise ConfigError(f"unknown se_method {self.se_method!r}")
        if self.input_path is None and self.generator is None:
            raise ConfigError("config needs 'input' or a 'simulate' block")

    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def load_panel(config: RunConfig, seed: int | None = None) -> tuple[PanelDataset, str]:
    """Panel and the sha256 of its source bytes."""
    if config.input_path is not None:
        try:
            data = config.input_path.read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read input {config.input_path}: {exc}") from None
        panel = read_dataset(config.input_path, config.schema, survey_years=config.survey_years, drop_invalid=config.drop_invalid)
        return panel, hashlib.sha256(data).hexdigest()
    gen = GeneratorConfig.from_json(config.generator, seed=config.seed if seed is None else seed)
    panel = simulate_panel(gen).panel
    return panel, hashlib.sha256(serialize_dataset(panel).encode()).hexdigest()


def build_sample(panel: PanelDataset, spec: SampleSpec) -> MatchingSample:
    if spec.kind == "full_pooling":
        return build_full_pooling(panel, spec.pooling)
    return build_partial_pooling(panel, spec.pooling)


@dataclass
class CellResult:
    name: str
    status: str
    note: str = ""
    files: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def build_frontier(sample: MatchingSample, metric: MetricSpec, config: RunConfig) -> Frontier:
    if metric.kind == "L1":
        spec = BinningSpec.from_json(config.binning, sample)
        return build_frontier_l1(sample, spec, seed=config.seed)
    return build_frontier_ami(sample, metric.allow_treated_pruning, reestimate_covariance=config.reestimate_covariance)


def _dump(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="")


def run_cell(name: str, sample: MatchingSample, metric: MetricSpec, config: RunConfig, out_dir: Path, strict: bool = False) -> CellResult:
    """One frontier with its balance report and ATT; never raises on data problems."""
    cell_dir = out_dir / name
    try:
        if sample.n_treated == 0:
            return CellResult(name, "skipped", "no treated units", summary={"n_pre": sample.n, "treated_pre": 0})
        if sample.n_control == 0:
            return CellResult(name, "skipped", "no control units", summary={"n_pre": sample.n, "treated_pre": sample.n_treated})
        frontier = build_frontier(sample, metric, config)
        if strict and frontier.monotonicity_violations:
            raise FrontierMatchError(f"{frontier.monotonicity_violations} AMI monotonicity violation(s)")
        selection = select_balanced_subset(frontier, sample, config.alpha)
        matched = frontier.subset(sample, selection.index)
        att = estimate_att(matched, sample, config.se_method, config.bootstrap_reps, config.seed)
        naive = estimate_att(sample, se_method=config.se_method, bootstrap_reps=config.bootstrap_reps, seed=config.seed)
        try:
            unmatched_balance = balance_report(sample, config.alpha).to_dict()
        except InsufficientDataError as exc:
            unmatched_balance = {"note": str(exc)}
        curve = att_along_frontier(frontier, sample)
    except (FrontierMatchError, np.linalg.LinAlgError) as exc:
        log.error("cell %s failed: %s", name, exc)
        return CellResult(name, "failed", str(exc))

    cell_dir.mkdir(parents=True, exist_ok=True)
    _dump(cell_dir / "frontier.csv", frontier.to_csv())
    balance = {
        "alpha": config.alpha,
        "unmatched": unmatched_balance,
        "matched": selection.report.to_dict(),
        "selected_point": {
            "index": selection.index,
            "pruned_count": selection.point.pruned_count,
            "balanced": selection.balanced,
            "imbalance": selection.point.imbalance,
        },
    }
    _dump(cell_dir / "balance.json", json.dumps(balance, indent=2, sort_keys=True) + "\n")
    result = {
        "cell": name,
        "metric": metric.label,
        "sample": sample.provenance,
        "matched": att.to_dict(),
        "unmatched": naive.to_dict(),
        "observations_pre": sample.n,
        "treated_pre": sample.n_treated,
        "observations_post": att.n_total,
        "treated_post": att.n_treated,
        "balanced": selection.balanced,
        "frontier_points": len(frontier),
        "monotonicity_violations": frontier.monotonicity_violations,
        "att_curve": [
            {"pruned_count": fe.pruned_count, "att": fe.estimate.att, "std_error": fe.estimate.std_error}
            if fe.estimate
            else {"pruned_count": fe.pruned_count, "note": fe.note}
            for fe in curve
        ],
    }
    _dump(cell_dir / "att.json", json.dumps(result, indent=2, sort_keys=True) + "\n")
    summary = {
        "att": att.att,
        "std_error": att.std_error,
        "stars": att.stars,
        "estimand": att.estimand_label,
        "n_pre": sample.n,
        "treated_pre": sample.n_treated,
        "n_post": att.n_total,
        "treated_post": att.n_treated,
        "balanced": selection.balanced,
    }
    files = [f"{name}/frontier.csv", f"{name}/balance.json", f"{name}/att.json"]
    status = "ok" if not frontier.monotonicity_violations else "ok_with_warnings"
    note = "; ".join(frontier.notes)
    return CellResult(name, status, note, files, summary)


def plan_cells(panel: PanelDataset, config: RunConfig) -> list[tuple[str, MatchingSample, MetricSpec]]:
    cells = []
    for spec in config.samples:
        sample = build_sample(panel, spec)
        filters: list[tuple[str, MatchingSample]] = [("", sample)]
        if config.sweep_years:
            years = config.sweep_years if isinstance(config.sweep_years, list) else range(*_span(spec.pooling.study_window))
            for y in years:
                if spec.kind == "partial_pooling" and y not in spec.pooling.survey_years:
                    continue
                try:
                    sub = subset_by(sample, year=y)
                except DegenerateSampleError:
                    sub = sample.take(np.zeros(sample.n, dtype=bool), provenance=f"subset({sample.provenance}:year={y})")
                filters.append((f"__year={y}", sub))
        if config.sweep_villages:
            villages = config.sweep_villages if isinstance(config.sweep_villages, list) else sorted(set(sample.villages))
            for v in villages:
                try:
                    sub = subset_by(sample, village=v)
                except DegenerateSampleError:
                    sub = sample.take(np.zeros(sample.n, dtype=bool), provenance=f"subset({sample.provenance}:village={v})")
                filters.append((f"__village={v}", sub))
        for suffix, sub in filters:
            for metric in config.metrics:
                cells.append((f"{spec.name}__{metric.label}{suffix}", sub, metric))
    return cells


def _span(window: tuple[int, int]) -> tuple[int, int]:
    return window[0], window[1] + 1


def _sweep_table(results: list[CellResult], key: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["n_pre", "treated_pre", "n_post", "treated_post", "att", "std_error", "stars", "estimand", "balanced"]
    w.writerow(["cell", "status", *cols, "note"])
    for r in results:
        if f"__{key}=" in r.name:
            w.writerow([r.name, r.status, *(r.summary.get(c, "") for c in cols), r.note])
    return buf.getvalue()


def _versions() -> dict:
    return {
        "frontier_match": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def run_pipeline(config: RunConfig, out_dir: Path | None = None, jobs: int = 1, strict: bool = False, seed: int | None = None) -> list[CellResult]:
    """Run every cell and write the report bundle plus ``manifest.json``."""
    out_dir = Path(out_dir or config.output_dir or "frontier_match_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    if seed is not None:
        config.seed = seed
    panel, input_digest = load_panel(config)
    report = validate(panel)
    if not report.ok:
        raise DataValidationError(report)
    if strict and report.warnings:
        raise DataValidationError(report)
    for _, msg in report.warnings:
        log.warning("validation: %s", msg)

    cells = plan_cells(panel, config)
    if jobs > 1 and len(cells) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_cell, name, s, m, config, out_dir, strict) for name, s, m in cells]
            results = [f.result() for f in futures]
    else:
        results = [run_cell(name, s, m, config, out_dir, strict) for name, s, m in cells]

    extra = []
    if config.sweep_years:
        _dump(out_dir / "sweep_years.csv", _sweep_table(results, "year"))
        extra.append("sweep_years.csv")
    if config.sweep_villages:
        _dump(out_dir / "sweep_villages.csv", _sweep_table(results, "village"))
        extra.append("sweep_villages.csv")

    manifest = {
        "config_sha256": config.digest(),
        "input_sha256": input_digest,
        "seed": config.seed,
        "versions": _versions(),
        "validation": {"errors": len(report.errors), "warnings": len(report.warnings)},
        "cells": [
            {"name": r.name, "status": r.status, "note": r.note, "files": r.files}
            for r in sorted(results, key=lambda r: r.name)
        ],
        "tables": extra,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    _dump(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return results


def write_descriptives(panel: PanelDataset, config: RunConfig, out_dir: Path) -> list[str]:
    """Diffusion curves, levels, categories, fractionalization and group tables."""
    out_dir.mkdir(parents=True, exist_ok=True)
    opts = config.describe
    written = []
    villages = list(panel.villages)

    def dump(name, text):
        _dump(out_dir / name, text)
        written.append(name)

    groups = opts.get("groups") or {"all": villages}
    series_rows = ["group,year,cumulative_adopter_share"]
    for gname, vs in sorted(groups.items()):
        for y, share in diffusion_series(panel, vs).points:
            series_rows.append(f"{gname},{y},{share!r}")
    for v in villages:
        for y, share in diffusion_series(panel, [v]).points:
            series_rows.append(f"{v},{y},{share!r}")
    dump("diffusion_series.csv", "\n".join(series_rows) + "\n")

    level_years = opts.get("level_years") or sorted({min(panel.years), max(panel.years)})
    lines = ["village," + ",".join(f"level_{y}" for y in level_years)]
    for v in villages:
        lines.append(v + "," + ",".join(repr(diffusion_level(panel, v, y)) for y in level_years))
    dump("diffusion_levels.csv", "\n".join(lines) + "\n")

    thresholds = opts.get("thresholds", (2.5, 16.0, 50.0, 84.0))
    local = household_categories(panel, thresholds=thresholds)
    lines = ["household_id,category_local"]
    lines += [f"{h},{c.value}" for h, c in local.items()]
    dump("adopter_categories.csv", "\n".join(lines) + "\n")

    eth = village_fractionalization(panel, "ethnicity")
    rel = village_fractionalization(panel, "religion")
    lines = ["village,ethnic_fractionalization,religious_fractionalization"]
    lines += [f"{v},{eth[v]!r},{rel[v]!r}" for v in villages]
    dump("fractionalization.csv", "\n".join(lines) + "\n")

    numeric = [c.name for c in panel.schema.entries if c.kind != "categorical"]
    variables = opts.get("variables", numeric)
    year = opts.get("year")
    try:
        table = group_comparison(panel, (lambda r: r.treated, lambda r: not r.treated), variables, year, ("treated", "control"))
        dump("comparison_treated_control.csv", table.to_csv())
    except (DegenerateSampleError, InsufficientDataError) as exc:
        log.warning("treated/control comparison skipped: %s", exc)
    if len(groups) == 2:
        (ga, va), (gb, vb) = sorted(groups.items())
        sa, sb = set(va), set(vb)
        try:
            table = group_comparison(panel, (lambda r: r.village in sa, lambda r: r.village in sb), variables, year, (ga, gb))
            dump(f"comparison_{ga}_{gb}.csv", table.to_csv())
        except (DegenerateSampleError, InsufficientDataError) as exc:
            log.warning("group comparison skipped: %s", exc)
    means = village_means(panel, variables, year)
    lines = ["village," + ",".join(variables)]
    lines += [v + "," + ",".join(repr(m[x]) for x in variables) for v, m in means.items()]
    dump("village_means.csv", "\n".join(lines) + "\n")
    return written


def default_jobs() -> int:
    return max(1, min(4, os.cpu_count() or 1))
