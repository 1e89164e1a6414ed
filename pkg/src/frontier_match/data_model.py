"""Household-year panel schema, CSV ingestion and structural validation.

Input files are UTF-8 comma-separated text with a header row. The first seven
columns are fixed (``FIXED_COLUMNS``); one column per schema covariate follows
in schema order.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Literal, Union

from .errors import DuplicateKeyError, ParseError, SchemaError

CovariateKind = Literal["continuous", "binary", "categorical"]
CovariateValue = Union[float, int, str]

FIXED_COLUMNS = ("household_id", "year", "village", "ethnicity", "religion", "treated", "outcome")
KINDS = ("continuous", "binary", "categorical")


@dataclass(frozen=True)
class Covariate:
    name: str
    kind: CovariateKind = "continuous"
    units: str = ""


@dataclass(frozen=True)
class CovariateSchema:
    entries: tuple[Covariate, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise SchemaError("schema needs at least one covariate")
        seen = set()
        for e in entries:
            if not e.name:
                raise SchemaError("covariate names must be non-empty")
            if e.name in FIXED_COLUMNS:
                raise SchemaError(f"covariate name {e.name!r} clashes with a fixed column")
            if e.name in seen:
                raise SchemaError(f"duplicate covariate name {e.name!r}")
            if e.kind not in KINDS:
                raise SchemaError(f"unknown kind {e.kind!r} for {e.name!r}")
            seen.add(e.name)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, name: str) -> Covariate:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def subset(self, names: Iterable[str]) -> "CovariateSchema":
        return CovariateSchema(tuple(self[n] for n in names))

    @classmethod
    def from_json(cls, spec: list[dict]) -> "CovariateSchema":
        """Build from ``[{"name": ..., "kind": ..., "units": ...}, ...]``."""
        return cls(tuple(Covariate(d["name"], d.get("kind", "continuous"), d.get("units", "")) for d in spec))

    def to_json(self) -> list[dict]:
        return [{"name": e.name, "kind": e.kind, "units": e.units} for e in self.entries]


@dataclass(frozen=True)
class Observation:
    household_id: str
    year: int
    village: str
    treated: bool
    outcome: bool
    covariates: tuple[CovariateValue, ...]
    ethnicity: str = ""
    religion: str = ""


@dataclass(frozen=True)
class PanelDataset:
    schema: CovariateSchema
    rows: tuple[Observation, ...]
    survey_years: frozenset[int] = field(default=frozenset())

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        years = frozenset(self.survey_years) if self.survey_years else self.years
        object.__setattr__(self, "survey_years", years)

    @property
    def years(self) -> frozenset[int]:
        return frozenset(r.year for r in self.rows)

    @property
    def villages(self) -> tuple[str, ...]:
        return tuple(sorted({r.village for r in self.rows}))

    def by_household(self) -> dict[str, list[Observation]]:
        """Rows grouped per household, each list sorted by year."""
        out: dict[str, list[Observation]] = {}
        for r in self.rows:
            out.setdefault(r.household_id, []).append(r)
        for rows in out.values():
            rows.sort(key=lambda r: r.year)
        return out

    def column(self, name: str) -> list[CovariateValue]:
        j = self.schema.index(name)
        return [r.covariates[j] for r in self.rows]


@dataclass
class ValidationReport:
    errors: list[tuple[int, str]] = field(default_factory=list)
    warnings: list[tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def summary(self) -> str:
        lines = [f"{len(self.errors)} error(s), {len(self.warnings)} warning(s)"]
        lines += [f"  error   row {i}: {m}" for i, m in self.errors]
        lines += [f"  warning row {i}: {m}" for i, m in self.warnings]
        return "\n".join(lines)


def _parse_flag(text: str, row: int, column: str) -> bool:
    if text not in ("0", "1"):
        raise ParseError(row, column, f"expected 0 or 1, got {text!r}")
    return text == "1"


def _parse_covariate(text: str, cov: Covariate, row: int) -> CovariateValue:
    if text == "":
        raise ParseError(row, cov.name, "missing value")
    if cov.kind == "categorical":
        return text
    try:
        value = float(text)
    except ValueError:
        raise ParseError(row, cov.name, f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(row, cov.name, f"not finite: {text!r}")
    if cov.kind == "binary":
        if value not in (0.0, 1.0):
            raise ParseError(row, cov.name, f"binary covariate must be 0 or 1, got {text!r}")
        return int(value)
    return value


def _parse_row(fields: list[str], schema: CovariateSchema, row: int) -> Observation:
    width = len(FIXED_COLUMNS) + len(schema)
    if len(fields) != width:
        raise ParseError(row, "*", f"expected {width} fields, got {len(fields)}")
    hid, year_text, village, ethnicity, religion, treated, outcome = fields[: len(FIXED_COLUMNS)]
    for name, text in (("household_id", hid), ("year", year_text), ("village", village)):
        if text == "":
            raise ParseError(row, name, "missing value")
    try:
        year = int(year_text)
    except ValueError:
        raise ParseError(row, "year", f"not an integer: {year_text!r}") from None
    covs = tuple(
        _parse_covariate(text, cov, row)
        for text, cov in zip(fields[len(FIXED_COLUMNS):], schema.entries)
    )
    return Observation(
        household_id=hid,
        year=year,
        village=village,
        treated=_parse_flag(treated, row, "treated"),
        outcome=_parse_flag(outcome, row, "outcome"),
        covariates=covs,
        ethnicity=ethnicity,
        religion=religion,
    )


def parse_dataset(
    source: IO[bytes] | IO[str] | bytes | str,
    schema: CovariateSchema,
    survey_years: Iterable[int] | None = None,
    drop_invalid: bool = False,
) -> PanelDataset:
    """Parse delimited text into a :class:`PanelDataset`.

    Row numbers in errors are 1-based data rows (the header is row 0).
    With ``drop_invalid`` rows that fail to parse (including rows with an
    empty field) are skipped instead of raising; duplicate keys always raise.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(0, "*", "empty input") from None
    expected = list(FIXED_COLUMNS) + list(schema.names)
    if header != expected:
        raise ParseError(0, "*", f"header mismatch: expected {expected}, got {header}")

    rows: list[Observation] = []
    seen: set[tuple[str, int]] = set()
    for i, fields in enumerate(reader, start=1):
        if not fields:
            continue
        try:
            obs = _parse_row(fields, schema, i)
        except ParseError:
            if drop_invalid:
                continue
            raise
        key = (obs.household_id, obs.year)
        if key in seen:
            raise DuplicateKeyError(obs.household_id, obs.year, row=i)
        seen.add(key)
        rows.append(obs)
    return PanelDataset(schema, tuple(rows), frozenset(survey_years or ()))


def _format_value(value: CovariateValue) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_dataset(dataset: PanelDataset) -> str:
    """Inverse of :func:`parse_dataset` (LF newlines, exact float repr)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(FIXED_COLUMNS) + list(dataset.schema.names))
    for r in dataset.rows:
        writer.writerow(
            [r.household_id, r.year, r.village, r.ethnicity, r.religion, int(r.treated), int(r.outcome)]
            + [_format_value(v) for v in r.covariates]
        )
    return buf.getvalue()


def write_dataset(dataset: PanelDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(serialize_dataset(dataset))


def read_dataset(path, schema: CovariateSchema, **kwargs) -> PanelDataset:
    with open(path, "rb") as fh:
        return parse_dataset(fh, schema, **kwargs)


def _check_value(value, cov: Covariate) -> str | None:
    if cov.kind == "categorical":
        if not isinstance(value, str) or value == "":
            return f"{cov.name}: categorical value must be a non-empty string"
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return f"{cov.name}: expected a number, got {value!r}"
    if not math.isfinite(value):
        return f"{cov.name}: non-finite value {value!r}"
    if cov.kind == "binary" and value not in (0, 1):
        return f"{cov.name}: binary value {value!r} not in {{0, 1}}"
    return None


def validate(dataset: PanelDataset, study_window: tuple[int, int] | None = None) -> ValidationReport:
    """Collect every structural violation; never raises on bad data.

    Warnings flag rows that the sample builder would discard, e.g. a household
    reported as a first-time adopter again after its adoption year.
    """
    report = ValidationReport()
    schema = dataset.schema
    seen: dict[tuple[str, int], int] = {}
    for i, r in enumerate(dataset.rows):
        if len(r.covariates) != len(schema):
            report.errors.append((i, f"covariate vector has length {len(r.covariates)}, schema has {len(schema)}"))
        else:
            for value, cov in zip(r.covariates, schema.entries):
                msg = _check_value(value, cov)
                if msg:
                    report.errors.append((i, msg))
        if not r.household_id:
            report.errors.append((i, "empty household_id"))
        if study_window is not None and not (study_window[0] <= r.year <= study_window[1]):
            report.errors.append((i, f"year {r.year} outside study window {study_window[0]}-{study_window[1]}"))
        key = (r.household_id, r.year)
        if key in seen:
            report.errors.append((i, f"duplicate household-year {key} (first at row {seen[key]})"))
        else:
            seen[key] = i

    missing = sorted(dataset.survey_years - dataset.years)
    if missing:
        report.errors.append((-1, f"survey years {missing} have no rows"))

    index = {id(r): i for i, r in enumerate(dataset.rows)}
    for hid, rows in dataset.by_household().items():
        adopted_in = None
        for r in rows:
            if adopted_in is not None and r.outcome:
                report.warnings.append(
                    (index[id(r)], f"household {hid!r} reported adopting in {r.year} after adoption in {adopted_in}")
                )
            if r.outcome and adopted_in is None:
                adopted_in = r.year
        if len({r.village for r in rows}) > 1:
            report.warnings.append((index[id(rows[0])], f"household {hid!r} appears in several villages"))
    return report
