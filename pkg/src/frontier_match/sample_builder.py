"""Year-wise treated/control sample construction from a household panel.

Assignment rules, applied per household inside the study window:

* a household is a control in every year before its first treatment;
* it is treated only in the year of its first treatment and dropped afterwards;
* it is dropped after the year in which it first adopts;
* households that adopted before the window are never at risk and never enter.

Partial pooling applies the same rules and then keeps survey years only, so a
household treated between survey rounds keeps its earlier control rows but
contributes no treated row.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .data_model import Covariate, CovariateSchema, Observation, PanelDataset
from .errors import ConfigError, DegenerateSampleError, RuleViolationError

# village-level covariates computed from the panel rather than read from it
DERIVED_COVARIATES = {
    "ethnic_majority": "binary",
    "religious_majority": "binary",
    "ethnic_fractionalization": "continuous",
    "religious_fractionalization": "continuous",
}


@dataclass(frozen=True)
class MatchingSample:
    """Treated/control units with a fully numeric covariate matrix.

    ``X`` has one row per unit and one column per entry of ``schema``;
    categorical panel covariates arrive one-hot encoded as ``name=level``.
    """

    schema: CovariateSchema
    unit_ids: tuple[str, ...]
    years: np.ndarray
    villages: tuple[str, ...]
    treated: np.ndarray
    outcome: np.ndarray
    X: np.ndarray
    provenance: str = "subset(unspecified)"

    def __post_init__(self):
        n = len(self.unit_ids)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(n, -1)
        for name, value in (
            ("years", np.asarray(self.years, dtype=int)),
            ("treated", np.asarray(self.treated, dtype=bool)),
            ("outcome", np.asarray(self.outcome, dtype=bool)),
            ("X", X),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "unit_ids", tuple(self.unit_ids))
        object.__setattr__(self, "villages", tuple(self.villages))
        if not (len(self.years) == len(self.villages) == len(self.treated) == len(self.outcome) == X.shape[0] == n):
            raise ValueError("unit arrays have inconsistent lengths")
        if X.shape[1] != len(self.schema):
            raise ValueError(f"X has {X.shape[1]} columns, schema has {len(self.schema)}")

    @property
    def n(self) -> int:
        return len(self.unit_ids)

    @property
    def n_treated(self) -> int:
        return int(self.treated.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated

    @property
    def units(self) -> list[tuple[str, int, bool, bool, tuple[float, ...]]]:
        return [
            (u, int(y), bool(t), bool(o), tuple(x))
            for u, y, t, o, x in zip(self.unit_ids, self.years, self.treated, self.outcome, self.X)
        ]

    def keys(self) -> list[tuple[str, int]]:
        return [(u, int(y)) for u, y in zip(self.unit_ids, self.years)]

    def take(self, index, provenance: str | None = None) -> "MatchingSample":
        """Units at ``index`` (integer positions or boolean mask), order kept."""
        idx = np.asarray(index)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return MatchingSample(
            schema=self.schema,
            unit_ids=tuple(self.unit_ids[i] for i in idx),
            years=self.years[idx],
            villages=tuple(self.villages[i] for i in idx),
            treated=self.treated[idx],
            outcome=self.outcome[idx],
            X=self.X[idx],
            provenance=provenance or self.provenance,
        )

    def require_both_groups(self) -> None:
        if self.n_treated == 0:
            raise DegenerateSampleError(f"{self.provenance}: no treated units")
        if self.n_control == 0:
            raise DegenerateSampleError(f"{self.provenance}: no control units")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# provenance: {self.provenance}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["unit_id", "year", "village", "treated", "outcome", *self.schema.names])
        for u, y, v, t, o, x in zip(self.unit_ids, self.years, self.villages, self.treated, self.outcome, self.X):
            w.writerow([u, int(y), v, int(t), int(o), *(repr(float(a)) for a in x)])
        return buf.getvalue()


@dataclass(frozen=True)
class PoolingConfig:
    study_window: tuple[int, int]
    covariate_subset: tuple[str, ...]
    survey_years: frozenset[int] = field(default=frozenset())
    drop_after_treatment: bool = True
    drop_after_adoption: bool = True

    def __post_init__(self):
        object.__setattr__(self, "study_window", tuple(self.study_window))
        object.__setattr__(self, "covariate_subset", tuple(self.covariate_subset))
        object.__setattr__(self, "survey_years", frozenset(self.survey_years))
        lo, hi = self.study_window
        if lo > hi:
            raise ConfigError(f"study window {lo}-{hi} is empty")
        if not self.covariate_subset:
            raise ConfigError("covariate_subset is empty")
        if not (self.drop_after_treatment and self.drop_after_adoption):
            raise ConfigError("drop_after_treatment and drop_after_adoption are fixed to true")

    @classmethod
    def from_json(cls, doc: dict) -> "PoolingConfig":
        try:
            return cls(
                study_window=tuple(doc["study_window"]),
                covariate_subset=tuple(doc["covariates"]),
                survey_years=frozenset(doc.get("survey_years", ())),
                drop_after_treatment=doc.get("drop_after_treatment", True),
                drop_after_adoption=doc.get("drop_after_adoption", True),
            )
        except KeyError as exc:
            raise ConfigError(f"pooling config missing key {exc}") from None

    @classmethod
    def load(cls, path) -> "PoolingConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _assignment(rows: list[Observation], window: tuple[int, int]) -> list[tuple[Observation, bool]]:
    """Apply the assignment rules to one household's year-sorted rows."""
    lo, hi = window
    adoption = next((r.year for r in rows if r.outcome), None)
    if adoption is not None and adoption < lo:
        return []
    first_treat = next((r.year for r in rows if r.treated), None)
    if first_treat is not None and first_treat < lo:
        raise RuleViolationError(
            f"household {rows[0].household_id!r} treated in {first_treat}, before the study window starts in {lo}"
        )
    last = min(y for y in (first_treat, adoption, hi) if y is not None)
    return [(r, r.year == first_treat) for r in rows if lo <= r.year <= last]


def _derived_columns(panel: PanelDataset, names: list[str]) -> dict[str, dict[str, float]]:
    """Household-level values of derived village covariates, keyed by name."""
    from .descriptives import majority_membership, village_fractionalization

    out: dict[str, dict[str, float]] = {}
    for name in names:
        dim = "ethnicity" if name.startswith("ethnic") else "religion"
        if name.endswith("_majority"):
            out[name] = {h: float(v) for h, v in majority_membership(panel, dim).items()}
        else:
            frac = village_fractionalization(panel, dim)
            out[name] = {h: frac[rows[0].village] for h, rows in panel.by_household().items()}
    return out


def _encoded_schema(panel: PanelDataset, names: tuple[str, ...]) -> tuple[CovariateSchema, list]:
    """Numeric schema plus, per panel covariate, a rule to produce its columns."""
    entries: list[Covariate] = []
    plan = []
    for name in names:
        if name in DERIVED_COVARIATES:
            entries.append(Covariate(name, DERIVED_COVARIATES[name]))
            plan.append(("derived", name, None))
            continue
        try:
            cov = panel.schema[name]
        except KeyError:
            raise ConfigError(f"covariate {name!r} is not in the panel schema") from None
        j = panel.schema.index(name)
        if cov.kind == "categorical":
            levels = sorted({r.covariates[j] for r in panel.rows})
            entries += [Covariate(f"{name}={lv}", "binary", cov.units) for lv in levels]
            plan.append(("onehot", j, levels))
        else:
            entries.append(cov)
            plan.append(("raw", j, None))
    return CovariateSchema(tuple(entries)), plan


def _build(panel: PanelDataset, config: PoolingConfig, keep_years: frozenset[int] | None, provenance: str) -> MatchingSample:
    schema, plan = _encoded_schema(panel, config.covariate_subset)
    derived = _derived_columns(panel, [p[1] for p in plan if p[0] == "derived"])

    ids, years, villages, treated, outcome, X = [], [], [], [], [], []
    for hid, rows in sorted(panel.by_household().items()):
        for r, is_treated in _assignment(rows, config.study_window):
            if keep_years is not None and r.year not in keep_years:
                continue
            vec: list[float] = []
            for kind, key, levels in plan:
                if kind == "raw":
                    vec.append(float(r.covariates[key]))
                elif kind == "onehot":
                    vec += [1.0 if r.covariates[key] == lv else 0.0 for lv in levels]
                else:
                    vec.append(derived[key][hid])
            ids.append(hid)
            years.append(r.year)
            villages.append(r.village)
            treated.append(is_treated)
            outcome.append(r.outcome)
            X.append(vec)
    order = sorted(range(len(ids)), key=lambda i: (years[i], ids[i]))
    sample = MatchingSample(
        schema=schema,
        unit_ids=tuple(ids[i] for i in order),
        years=np.array([years[i] for i in order], dtype=int),
        villages=tuple(villages[i] for i in order),
        treated=np.array([treated[i] for i in order], dtype=bool),
        outcome=np.array([outcome[i] for i in order], dtype=bool),
        X=np.array([X[i] for i in order], dtype=float).reshape(len(order), len(schema)),
        provenance=provenance,
    )
    if sample.n_treated == 0:
        raise DegenerateSampleError(f"{provenance}: no treated units in the study window")
    return sample


def build_full_pooling(panel: PanelDataset, config: PoolingConfig) -> MatchingSample:
    """Every window year, one unit per at-risk household-year.

    Units are ordered by (year, household_id).
    """
    return _build(panel, config, None, "full_pooling")


def build_partial_pooling(panel: PanelDataset, config: PoolingConfig) -> MatchingSample:
    """Same rules as full pooling restricted to ``config.survey_years``."""
    if not config.survey_years:
        raise ConfigError("partial pooling needs survey_years")
    extra = sorted(config.survey_years - panel.survey_years)
    if extra:
        raise ConfigError(f"survey years {extra} are not survey years of the panel")
    return _build(panel, config, config.survey_years, "partial_pooling")


def subset_by(sample: MatchingSample, year: int | None = None, village: str | None = None) -> MatchingSample:
    """Units of one year and/or one village."""
    if year is None and village is None:
        raise ValueError("give year and/or village")
    mask = np.ones(sample.n, dtype=bool)
    parts = []
    if year is not None:
        mask &= sample.years == year
        parts.append(f"year={year}")
    if village is not None:
        mask &= np.array([v == village for v in sample.villages], dtype=bool)
        parts.append(f"village={village}")
    desc = ",".join(parts)
    if not mask.any():
        raise DegenerateSampleError(f"no units with {desc}")
    return sample.take(mask, provenance=f"subset({sample.provenance}:{desc})")


def treated_counts_by_year(sample: MatchingSample) -> dict[int, int]:
    years, counts = np.unique(sample.years[sample.treated], return_counts=True)
    return {int(y): int(c) for y, c in zip(years, counts)}

