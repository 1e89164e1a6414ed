"""ATT estimation, balance diagnostics and balanced-subset selection on frontiers."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy import stats

from .errors import DegenerateSampleError, InsufficientDataError
from .frontier import Frontier, FrontierPoint
from .sample_builder import MatchingSample

DEFAULT_ALPHA = 0.10
STAR_LEVELS = ((0.01, "***"), (0.05, "**"), (0.1, "*"))


@dataclass(frozen=True)
class AttEstimate:
    att: float
    std_error: float
    n_total: int
    n_treated: int
    n_control: int
    estimand_label: Literal["SATT", "FSATT"] = "SATT"
    p_value: float = float("nan")

    @property
    def stars(self) -> str:
        return significance_stars(self.p_value)

    def to_dict(self) -> dict:
        return asdict(self) | {"stars": self.stars}


def significance_stars(p: float) -> str:
    for level, mark in STAR_LEVELS:
        if p < level:
            return mark
    return ""


def _att_from_counts(y_t: float, n_t: int, y_c: float, n_c: int) -> tuple[float, float]:
    p_t = y_t / n_t
    p_c = y_c / n_c
    se = math.sqrt(p_t * (1 - p_t) / n_t + p_c * (1 - p_c) / n_c)
    return p_t - p_c, se


def _z_pvalue(att: float, se: float) -> float:
    if se > 0:
        return float(2 * stats.norm.sf(abs(att) / se))
    return 1.0 if att == 0 else 0.0


def bootstrap_se(subset: MatchingSample, reps: int = 500, seed: int = 0) -> float:
    """Resampling SE: treated and control groups resampled separately."""
    rng = np.random.default_rng(seed)
    y_t = subset.outcome[subset.treated].astype(float)
    y_c = subset.outcome[~subset.treated].astype(float)
    mt = rng.choice(y_t, size=(reps, len(y_t))).mean(axis=1)
    mc = rng.choice(y_c, size=(reps, len(y_c))).mean(axis=1)
    return float(np.std(mt - mc, ddof=1))


def estimate_att(
    subset: MatchingSample,
    source: MatchingSample | None = None,
    se_method: Literal["analytic", "bootstrap"] = "analytic",
    bootstrap_reps: int = 500,
    seed: int = 0,
) -> AttEstimate:
    """Difference in adoption shares, treated minus control.

    The analytic SE is the unpooled two-proportion formula. The estimate is
    labelled FSATT when ``subset`` has fewer treated units than ``source``.
    """
    subset.require_both_groups()
    n_t, n_c = subset.n_treated, subset.n_control
    att, se = _att_from_counts(
        float(subset.outcome[subset.treated].sum()), n_t, float(subset.outcome[~subset.treated].sum()), n_c
    )
    if se_method == "bootstrap":
        se = bootstrap_se(subset, bootstrap_reps, seed)
    label = "FSATT" if source is not None and n_t < source.n_treated else "SATT"
    return AttEstimate(att, se, n_t + n_c, n_t, n_c, label, _z_pvalue(att, se))


def _welch_p(mean_a, var_a, n_a, mean_b, var_b, n_b):
    """Vectorised two-sided Welch p-values from group moments (ddof=1 variances)."""
    mean_a, var_a, n_a, mean_b, var_b, n_b = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (mean_a, var_a, n_a, mean_b, var_b, n_b))
    )
    va = var_a / n_a
    vb = var_b / n_b
    se2 = va + vb
    diff = mean_a - mean_b
    p = np.where(diff == 0, 1.0, 0.0)
    ok = se2 > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = diff / np.sqrt(se2)
        df = se2**2 / (np.where(n_a > 1, va**2 / (n_a - 1), 0.0) + np.where(n_b > 1, vb**2 / (n_b - 1), 0.0))
    p = np.where(ok, 2 * stats.t.sf(np.abs(np.where(ok, t, 0.0)), np.where(ok, df, 1.0)), p)
    return np.clip(p, 0.0, 1.0)


def mean_difference_test(values_a: Sequence[float], values_b: Sequence[float]) -> float:
    """Two-sided Welch unequal-variance t-test p-value.

    When both groups have zero variance the test degenerates: p = 1 if the
    means coincide, p = 0 if they differ (exact separation).
    """
    a = np.asarray(values_a, dtype=float)
    b = np.asarray(values_b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise InsufficientDataError("each group needs at least two values")
    return float(_welch_p(a.mean(), a.var(ddof=1), len(a), b.mean(), b.var(ddof=1), len(b)))


@dataclass
class BalanceRow:
    covariate: str
    mean_control: float
    mean_treated: float
    p_value: float
    note: str = ""


@dataclass
class BalanceReport:
    rows: list[BalanceRow]
    alpha: float = DEFAULT_ALPHA
    n_treated: int = 0
    n_control: int = 0

    @property
    def balanced(self) -> bool:
        return all(r.p_value > self.alpha for r in self.rows)

    @property
    def min_p_value(self) -> float:
        return min(r.p_value for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "balanced": self.balanced,
            "n_treated": self.n_treated,
            "n_control": self.n_control,
            "rows": [asdict(r) for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        lines = ["covariate,mean_control,mean_treated,p_value,note"]
        for r in self.rows:
            lines.append(f"{r.covariate},{r.mean_control!r},{r.mean_treated!r},{r.p_value!r},{r.note}")
        return "\n".join(lines) + "\n"


def _group_moments(X: np.ndarray, mask: np.ndarray):
    G = X[mask]
    n = G.shape[0]
    mean = G.mean(axis=0)
    var = G.var(axis=0, ddof=1) if n > 1 else np.zeros(X.shape[1])
    return mean, var, n


def balance_report(subset: MatchingSample, alpha: float = DEFAULT_ALPHA) -> BalanceReport:
    """Per-covariate group means and Welch p-values (Table-3 style)."""
    subset.require_both_groups()
    if subset.n_treated < 2 or subset.n_control < 2:
        raise InsufficientDataError("balance tests need at least two units per group")
    mc, vc, nc = _group_moments(subset.X, ~subset.treated)
    mt, vt, nt = _group_moments(subset.X, subset.treated)
    p = _welch_p(mc, vc, nc, mt, vt, nt)
    rows = []
    for j, name in enumerate(subset.schema.names):
        note = "constant in both groups" if vc[j] == 0 and vt[j] == 0 else ""
        rows.append(BalanceRow(name, float(mc[j]), float(mt[j]), float(p[j]), note))
    return BalanceReport(rows, alpha, nt, nc)


def balance_pvalues_along(frontier: Frontier, sample: MatchingSample) -> np.ndarray:
    """Welch p-values for every (frontier point, covariate), shape (points, d).

    Uses running sums over the removal order, so the cost is linear in n
    rather than quadratic. Points with a group smaller than two get NaN.
    """
    X = sample.X - sample.X.mean(axis=0)
    out = np.full((len(frontier.points), X.shape[1]), np.nan)
    order = frontier.removal_order
    pruned = frontier.pruned_counts
    moments = {}
    for group in (True, False):
        in_group = sample.treated == group
        Xo = np.where(in_group[order][:, None], X[order], 0.0)
        removed = np.vstack([np.zeros(X.shape[1]), np.cumsum(Xo, axis=0)])[pruned]
        removed2 = np.vstack([np.zeros(X.shape[1]), np.cumsum(Xo**2, axis=0)])[pruned]
        n = (in_group.sum() - np.concatenate([[0], np.cumsum(in_group[order])])[pruned])[:, None].astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = (X[in_group].sum(axis=0) - removed) / n
            var = ((X[in_group] ** 2).sum(axis=0) - removed2 - n * mean**2) / (n - 1)
        moments[group] = (mean, np.maximum(var, 0.0), n)
    mt, vt, nt = moments[True]
    mc, vc, nc = moments[False]
    ok = (nt[:, 0] >= 2) & (nc[:, 0] >= 2)
    out[ok] = _welch_p(mc[ok], vc[ok], nc[ok], mt[ok], vt[ok], nt[ok])
    # running sums leave rounding noise where both groups are constant
    tol = 1e-9 * max(1.0, float(np.abs(X).max(initial=0.0))) ** 2
    flat = ok[:, None] & (vt < tol) & (vc < tol)
    out[flat] = np.where(np.abs(mt - mc) < np.sqrt(tol), 1.0, 0.0)[flat]
    return out


@dataclass
class BalancedSelection:
    point: FrontierPoint
    index: int
    balanced: bool
    report: BalanceReport


def select_balanced_subset(frontier: Frontier, sample: MatchingSample, alpha: float = DEFAULT_ALPHA) -> BalancedSelection:
    """Largest frontier subset whose covariates all pass the balance test.

    Falls back to the minimum-imbalance point, flagged unbalanced. The
    screening uses running sums; the chosen point is re-checked exactly.
    """
    if not frontier.points:
        raise DegenerateSampleError("empty frontier")
    pvals = balance_pvalues_along(frontier, sample)
    candidates = np.flatnonzero(np.all(pvals > alpha, axis=1))
    for k in candidates:
        report = balance_report(frontier.subset(sample, int(k)), alpha)
        if report.balanced:
            return BalancedSelection(frontier.points[k], int(k), True, report)
    k = int(np.argmin(frontier.imbalances))
    sub = frontier.subset(sample, k)
    try:
        report = balance_report(sub, alpha)
    except InsufficientDataError:
        report = BalanceReport([], alpha, sub.n_treated, sub.n_control)
    return BalancedSelection(frontier.points[k], k, False, report)


@dataclass
class FrontierEstimate:
    pruned_count: int
    estimate: AttEstimate | None
    note: str = ""


def att_along_frontier(frontier: Frontier, sample: MatchingSample) -> list[FrontierEstimate]:
    """ATT at every frontier point; degenerate points become gaps with a note."""
    y = sample.outcome.astype(float)
    order = frontier.removal_order
    out = []
    cum_yt = np.concatenate([[0.0], np.cumsum(np.where(sample.treated[order], y[order], 0.0))])
    cum_yc = np.concatenate([[0.0], np.cumsum(np.where(~sample.treated[order], y[order], 0.0))])
    yt0 = float(y[sample.treated].sum())
    yc0 = float(y[~sample.treated].sum())
    n_t0 = sample.n_treated
    for p in frontier.points:
        k = p.pruned_count
        if p.treated_remaining < 1 or p.control_remaining < 1:
            out.append(FrontierEstimate(k, None, "degenerate subset"))
            continue
        att, se = _att_from_counts(yt0 - cum_yt[k], p.treated_remaining, yc0 - cum_yc[k], p.control_remaining)
        label = "FSATT" if p.treated_remaining < n_t0 else "SATT"
        est = AttEstimate(att, se, p.remaining_n, p.treated_remaining, p.control_remaining, label, _z_pvalue(att, se))
        out.append(FrontierEstimate(k, est))
    return out
