"""Diffusion levels and curves, adopter categories, fractionalization and group tables."""

from __future__ import annotations

import csv
import enum
import io
import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .data_model import Observation, PanelDataset
from .errors import ConfigError, DegenerateSampleError
from .estimation import mean_difference_test

ROGERS_CUTS = (2.5, 16.0, 50.0, 84.0)


class AdopterCategory(enum.Enum):
    INNOVATOR = "Innovator"
    EARLY_ADOPTER = "EarlyAdopter"
    EARLY_MAJORITY = "EarlyMajority"
    LATE_MAJORITY = "LateMajority"
    LAGGARD = "Laggard"


_ORDERED = list(AdopterCategory)


@dataclass(frozen=True)
class DiffusionSeries:
    village_set: frozenset[str]
    points: tuple[tuple[int, float], ...]

    def share_at(self, year: int) -> float:
        return dict(self.points)[year]

    def to_csv(self) -> str:
        lines = ["year,cumulative_adopter_share"]
        lines += [f"{y},{s!r}" for y, s in self.points]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FractionalizationIndex:
    dimension: str
    value: float


def household_villages(panel: PanelDataset) -> dict[str, str]:
    """Village of each household's earliest row."""
    return {h: rows[0].village for h, rows in panel.by_household().items()}


def first_adoption_years(panel: PanelDataset) -> dict[str, int | None]:
    return {h: next((r.year for r in rows if r.outcome), None) for h, rows in panel.by_household().items()}


def _households_in(panel: PanelDataset, villages: Iterable[str]) -> list[str]:
    villages = set(villages)
    known = set(panel.villages)
    unknown = villages - known
    if unknown:
        raise KeyError(f"unknown village(s) {sorted(unknown)}")
    return [h for h, v in household_villages(panel).items() if v in villages]


def diffusion_level(panel: PanelDataset, village: str, year: int) -> float:
    """Percent of the village's households that first adopted in or before ``year``."""
    households = _households_in(panel, [village])
    adopt = first_adoption_years(panel)
    done = sum(1 for h in households if adopt[h] is not None and adopt[h] <= year)
    return 100.0 * done / len(households)


def diffusion_series(panel: PanelDataset, villages: Iterable[str], years: Sequence[int] | None = None) -> DiffusionSeries:
    """Cumulative adopter share over the union of ``villages`` for every year.

    Default years run from the first to the last panel year of those villages.
    """
    villages = frozenset(villages)
    if not villages:
        raise ValueError("need at least one village")
    households = _households_in(panel, villages)
    if years is None:
        ys = [r.year for r in panel.rows if r.village in villages]
        years = range(min(ys), max(ys) + 1)
    adopt = first_adoption_years(panel)
    adoption_years = np.sort([adopt[h] for h in households if adopt[h] is not None])
    n = len(households)
    points = tuple(
        (int(y), 100.0 * int(np.searchsorted(adoption_years, y, side="right")) / n) for y in years
    )
    return DiffusionSeries(villages, points)


def adopter_category(share: float, thresholds: Sequence[float] = ROGERS_CUTS) -> AdopterCategory:
    """Category from the cumulative share (percent) at the time of adoption.

    Bins are right-closed: (0, 2.5] Innovator, (2.5, 16] EarlyAdopter, ...
    """
    cuts = tuple(float(c) for c in thresholds)
    if len(cuts) != 4 or any(b <= a for a, b in zip(cuts, cuts[1:])) or cuts[0] <= 0 or cuts[-1] >= 100:
        raise ConfigError(f"need four strictly increasing cut points inside (0, 100), got {thresholds}")
    if not (0 < share <= 100):
        raise ValueError(f"share must lie in (0, 100], got {share}")
    for cut, cat in zip(cuts, _ORDERED):
        if share <= cut:
            return cat
    return AdopterCategory.LAGGARD


def household_categories(
    panel: PanelDataset,
    villages: Iterable[str] | None = None,
    reference_villages: Iterable[str] | None = None,
    thresholds: Sequence[float] = ROGERS_CUTS,
) -> dict[str, AdopterCategory]:
    """Adopter category of every adopting household.

    The share is taken right after the household's adoption year, either in
    its own village or, with ``reference_villages``, in that reference set.
    A household adopting before anyone in the reference set is an Innovator.
    """
    homes = household_villages(panel)
    villages = set(villages) if villages is not None else set(panel.villages)
    reference = frozenset(reference_villages) if reference_villages is not None else None
    adopt = first_adoption_years(panel)
    out = {}
    for h, v in sorted(homes.items()):
        if v not in villages or adopt[h] is None:
            continue
        share = (
            diffusion_level(panel, v, adopt[h])
            if reference is None
            else diffusion_series(panel, reference, [adopt[h]]).points[0][1]
        )
        out[h] = AdopterCategory.INNOVATOR if share == 0 else adopter_category(share, thresholds)
    return out


def fractionalization(shares: Sequence[float], dimension: str = "ethnicity") -> FractionalizationIndex:
    """One minus the sum of squared group shares."""
    s = [float(x) for x in shares]
    if not s or any(x < 0 for x in s):
        raise ValueError("shares must be a non-empty list of non-negative numbers")
    if abs(math.fsum(s) - 1.0) > 1e-9:
        raise ValueError(f"shares sum to {math.fsum(s)}, not 1")
    return FractionalizationIndex(dimension, 1.0 - math.fsum(x * x for x in s))


def fractionalization_of(labels: Iterable[str], dimension: str = "ethnicity") -> FractionalizationIndex:
    counts = Counter(labels)
    total = sum(counts.values())
    return fractionalization([c / total for c in counts.values()], dimension)


def _household_labels(panel: PanelDataset, dimension: str) -> dict[str, str]:
    if dimension not in ("ethnicity", "religion"):
        raise ValueError(f"dimension must be 'ethnicity' or 'religion', got {dimension!r}")
    return {h: getattr(rows[0], dimension) for h, rows in panel.by_household().items()}


def village_fractionalization(panel: PanelDataset, dimension: str) -> dict[str, float]:
    """Index per village, counting each household once."""
    labels = _household_labels(panel, dimension)
    homes = household_villages(panel)
    by_village: dict[str, list[str]] = {}
    for h, v in homes.items():
        by_village.setdefault(v, []).append(labels[h])
    return {v: fractionalization_of(ls, dimension).value for v, ls in sorted(by_village.items())}


def majority_membership(panel: PanelDataset, dimension: str) -> dict[str, bool]:
    """Whether each household belongs to its village's largest group.

    Ties between equally large groups go to the alphabetically first label.
    """
    labels = _household_labels(panel, dimension)
    homes = household_villages(panel)
    counts: dict[str, Counter] = {}
    for h, v in homes.items():
        counts.setdefault(v, Counter())[labels[h]] += 1
    majority = {v: min(c.items(), key=lambda kv: (-kv[1], kv[0]))[0] for v, c in counts.items()}
    return {h: labels[h] == majority[homes[h]] for h in homes}


@dataclass
class ComparisonRow:
    variable: str
    mean_a: float
    mean_b: float
    p_value: float | None


@dataclass
class ComparisonTable:
    labels: tuple[str, str]
    n_a: int
    n_b: int
    rows: list[ComparisonRow]
    note: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        a, b = self.labels
        w.writerow(["variable", f"mean_{a}", f"mean_{b}", "p_value"])
        for r in self.rows:
            w.writerow([r.variable, repr(r.mean_a), repr(r.mean_b), "" if r.p_value is None else repr(r.p_value)])
        return buf.getvalue()


def _values(rows: list[Observation], panel: PanelDataset, variable: str) -> list[float]:
    if variable in ("treated", "outcome"):
        return [float(getattr(r, variable)) for r in rows]
    cov = panel.schema[variable]
    if cov.kind == "categorical":
        raise ValueError(f"{variable!r} is categorical; compare a numeric covariate")
    j = panel.schema.index(variable)
    return [float(r.covariates[j]) for r in rows]


def group_comparison(
    panel: PanelDataset,
    grouping: tuple[Callable[[Observation], bool], Callable[[Observation], bool]],
    variables: Sequence[str],
    year: int | None = None,
    labels: tuple[str, str] = ("a", "b"),
) -> ComparisonTable:
    """Means of each variable in two row groups, with Welch p-values.

    Groups with a single observation get means only (p-value ``None``).
    """
    pool = [r for r in panel.rows if year is None or r.year == year]
    group_a = [r for r in pool if grouping[0](r)]
    group_b = [r for r in pool if grouping[1](r)]
    if not group_a or not group_b:
        raise DegenerateSampleError(f"empty comparison group ({len(group_a)} vs {len(group_b)} rows)")
    testable = len(group_a) >= 2 and len(group_b) >= 2
    rows = []
    for var in variables:
        va, vb = _values(group_a, panel, var), _values(group_b, panel, var)
        p = mean_difference_test(va, vb) if testable else None
        rows.append(ComparisonRow(var, float(np.mean(va)), float(np.mean(vb)), p))
    note = "" if testable else "tests not performed: a group has a single observation"
    return ComparisonTable(labels, len(group_a), len(group_b), rows, note)


def village_means(panel: PanelDataset, variables: Sequence[str], year: int | None = None) -> dict[str, dict[str, float]]:
    """Per-village means of each variable (columns of a Table-2 style layout)."""
    out: dict[str, dict[str, float]] = {}
    for v in panel.villages:
        rows = [r for r in panel.rows if r.village == v and (year is None or r.year == year)]
        if rows:
            out[v] = {var: float(np.mean(_values(rows, panel, var))) for var in variables}
    return out
