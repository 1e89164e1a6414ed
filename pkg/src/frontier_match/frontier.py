"""Matching frontiers: greedy pruning paths along the imbalance/sample-size trade-off.

A :class:`Frontier` stores the order in which units were pruned, so the
surviving subset at any point is a prefix complement of ``removal_order``.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import InsufficientDataError, SizeLimitError
from .imbalance_metrics import (
    BinningSpec,
    CovarianceModel,
    cross_distances,
    estimate_covariance,
    l1_from_counts,
    nearest_opposite,
    stratum_codes,
)
from .sample_builder import MatchingSample

log = logging.getLogger(__name__)

AMI_ZERO = 1e-12

MetricKind = Literal["L1", "AMI"]


@dataclass(frozen=True)
class FrontierPoint:
    pruned_count: int
    imbalance: float
    treated_remaining: int
    control_remaining: int

    @property
    def remaining_n(self) -> int:
        return self.treated_remaining + self.control_remaining


@dataclass
class Frontier:
    metric_kind: MetricKind
    allow_treated_pruning: bool
    points: list[FrontierPoint]
    removal_order: np.ndarray
    n_total: int
    config_snapshot: BinningSpec | CovarianceModel | None = None
    monotonicity_violations: int = 0
    notes: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def imbalances(self) -> np.ndarray:
        return np.array([p.imbalance for p in self.points])

    @property
    def pruned_counts(self) -> np.ndarray:
        return np.array([p.pruned_count for p in self.points], dtype=int)

    def remaining_mask(self, point_index: int) -> np.ndarray:
        mask = np.ones(self.n_total, dtype=bool)
        mask[self.removal_order[: self.points[point_index].pruned_count]] = False
        return mask

    def remaining_unit_ids(self, point_index: int, sample: MatchingSample) -> set[tuple[str, int]]:
        keys = sample.keys()
        return {keys[i] for i in np.flatnonzero(self.remaining_mask(point_index))}

    def subset(self, sample: MatchingSample, point_index: int) -> MatchingSample:
        p = self.points[point_index]
        return sample.take(
            self.remaining_mask(point_index),
            provenance=f"{sample.provenance}|{self.metric_kind}:pruned={p.pruned_count}",
        )

    def is_non_increasing(self) -> bool:
        v = self.imbalances
        return bool(np.all(v[1:] <= v[:-1]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pruned_count", "remaining_n", "treated_n", "control_n", "imbalance"])
        for p in self.points:
            w.writerow([p.pruned_count, p.remaining_n, p.treated_remaining, p.control_remaining, repr(float(p.imbalance))])
        return buf.getvalue()


def build_frontier_l1(sample: MatchingSample, spec: BinningSpec | None = None, seed: int = 0) -> Frontier:
    """Control-only pruning against fixed histogram bins.

    Each step removes one control from the stratum whose control share most
    exceeds its treated share (ties: smallest signature), keeping the step
    only if L1 does not rise. Stops at L1 = 0, at the last control, or at the
    first rejected step.

    Which control leaves a stratum is irrelevant to L1, but any fixed rule
    tied to unit order (and so to year) would select on outcomes; controls
    inside a stratum are therefore removed in a seeded random order.
    """
    sample.require_both_groups()
    spec = spec or BinningSpec.default(sample)
    signatures, codes = stratum_codes(sample, spec)
    S = len(signatures)
    T = sample.n_treated
    t = np.bincount(codes[sample.treated], minlength=S).astype(float)
    c = np.bincount(codes[~sample.treated], minlength=S).astype(float)
    rng = np.random.default_rng(seed)
    pools = [[] for _ in range(S)]
    for i in rng.permutation(np.flatnonzero(~sample.treated)):
        pools[codes[i]].append(int(i))
    cursor = np.zeros(S, dtype=int)

    C = float(c.sum())
    current = l1_from_counts(t, c, T, int(C))
    points = [FrontierPoint(0, current, T, int(C))]
    order: list[int] = []
    while current > 0 and C > 1:
        surplus = np.where(c > 0, c / C - t / T, -np.inf)
        s = int(np.argmax(surplus))
        c[s] -= 1
        proposed = l1_from_counts(t, c, T, int(C - 1))
        if proposed > current:
            c[s] += 1
            break
        unit = pools[s][cursor[s]]
        cursor[s] += 1
        order.append(unit)
        C -= 1
        current = proposed
        points.append(FrontierPoint(len(order), current, T, int(C)))
    return Frontier("L1", False, points, np.array(order, dtype=np.int64), sample.n, spec)


def build_frontier_ami(
    sample: MatchingSample,
    allow_treated_pruning: bool = True,
    cov: CovarianceModel | None = None,
    reestimate_covariance: bool = False,
) -> Frontier:
    """Greedy pruning of the worst-matched units under average Mahalanobis imbalance.

    Every iteration removes all units whose nearest-opposite distance equals
    the current maximum (controls only when ``allow_treated_pruning`` is
    false), then re-matches the units that lost their match. Stops once
    AMI < 1e-12, two or fewer units remain, or the removal would empty a group.

    The covariance is estimated once on the full sample unless
    ``reestimate_covariance`` is set, in which case each surviving subset is
    re-whitened with its own covariance.

    A step that raises AMI (possible when only controls may be pruned) is
    kept as computed, counted in ``monotonicity_violations`` and logged.
    """
    sample.require_both_groups()
    cov = cov or estimate_covariance(sample)
    Z = cov.whiten(sample.X)
    treated = sample.treated
    alive = np.ones(sample.n, dtype=bool)
    dist, match = nearest_opposite(Z, treated)

    def point(pruned: int) -> FrontierPoint:
        nt = int((alive & treated).sum())
        return FrontierPoint(pruned, float(dist[alive].mean()), nt, int(alive.sum()) - nt)

    points = [point(0)]
    order: list[int] = []
    violations = 0
    notes: list[str] = []
    while True:
        n_alive = int(alive.sum())
        if points[-1].imbalance < AMI_ZERO or n_alive <= 2:
            break
        eligible = alive if allow_treated_pruning else alive & ~treated
        worst = dist[eligible].max()
        drop = np.flatnonzero(eligible & (dist == worst))
        nt_left = points[-1].treated_remaining - int(treated[drop].sum())
        nc_left = points[-1].control_remaining - int((~treated[drop]).sum())
        if nt_left < 1 or nc_left < 1:
            break
        alive[drop] = False
        order.extend(int(i) for i in drop)

        if reestimate_covariance:
            sub = np.flatnonzero(alive)
            try:
                Z_sub = estimate_covariance(sample.X[sub]).whiten(sample.X[sub])
            except (InsufficientDataError, np.linalg.LinAlgError) as exc:
                notes.append(f"stopped at pruned={len(order)}: {exc}")
                alive[drop] = True
                del order[-len(drop):]
                break
            d_sub, m_sub = nearest_opposite(Z_sub, treated[sub])
            dist[sub] = d_sub
            match[sub] = sub[m_sub]
        else:
            lost = np.flatnonzero(alive & ~alive[match])
            for i in lost:
                opp = np.flatnonzero(alive & (treated != treated[i]))
                d = cross_distances(Z[i:i + 1], Z[opp])[0]
                k = int(d.argmin())
                dist[i] = d[k]
                match[i] = opp[k]

        p = point(len(order))
        if p.imbalance > points[-1].imbalance:
            violations += 1
            msg = f"AMI rose from {points[-1].imbalance:.6g} to {p.imbalance:.6g} at pruned={p.pruned_count}"
            notes.append(msg)
            log.debug(msg)
        points.append(p)
    if violations:
        log.warning("AMI frontier is not monotone for this sample: it rose at %d step(s); points kept as computed", violations)
    return Frontier("AMI", allow_treated_pruning, points, np.array(order, dtype=np.int64), sample.n, cov, violations, notes)


def _ami_on(Z: np.ndarray, treated: np.ndarray, idx: tuple[int, ...]) -> float:
    sub = np.asarray(idx)
    t = treated[sub]
    D = cross_distances(Z[sub[t]], Z[sub[~t]])
    return float((D.min(axis=1).sum() + D.min(axis=0).sum()) / len(sub))


def brute_force_frontier(
    sample: MatchingSample,
    metric: MetricKind,
    allow_treated_pruning: bool = True,
    spec: BinningSpec | None = None,
    cov: CovarianceModel | None = None,
    max_n: int = 12,
) -> Frontier:
    """Exhaustive per-size minimum imbalance, for checking the greedy paths.

    Enumerates every subset with both groups non-empty (all treated kept when
    ``allow_treated_pruning`` is false) and keeps, for each subset size, the
    smallest metric value. Bins and covariance come from the full sample.
    ``removal_order`` is empty: the optimal subsets need not be nested.
    """
    if sample.n > max_n:
        raise SizeLimitError(f"brute force limited to n <= {max_n}, got {sample.n}")
    sample.require_both_groups()
    t_idx = tuple(int(i) for i in np.flatnonzero(sample.treated))
    c_idx = tuple(int(i) for i in np.flatnonzero(~sample.treated))

    if metric == "L1":
        spec = spec or BinningSpec.default(sample)
        signatures, codes = stratum_codes(sample, spec)

        def value(idx):
            sub = np.asarray(idx)
            tr = sample.treated[sub]
            t = np.bincount(codes[sub[tr]], minlength=len(signatures))
            c = np.bincount(codes[sub[~tr]], minlength=len(signatures))
            return l1_from_counts(t, c, int(tr.sum()), int((~tr).sum()))

        snapshot = spec
    else:
        cov = cov or estimate_covariance(sample)
        Z = cov.whiten(sample.X)

        def value(idx):
            return _ami_on(Z, sample.treated, idx)

        snapshot = cov

    def nonempty_subsets(pool):
        for r in range(1, len(pool) + 1):
            yield from itertools.combinations(pool, r)

    best: dict[int, tuple[float, int]] = {}
    t_choices = nonempty_subsets(t_idx) if allow_treated_pruning else [t_idx]
    for ts in t_choices:
        for cs in nonempty_subsets(c_idx):
            idx = tuple(sorted(ts + cs))
            v = value(idx)
            m = len(idx)
            if m not in best or v < best[m][0]:
                best[m] = (v, len(ts))
    points = [
        FrontierPoint(sample.n - m, v, nt, m - nt)
        for m, (v, nt) in sorted(best.items(), reverse=True)
    ]
    return Frontier(metric, allow_treated_pruning, points, np.array([], dtype=np.int64), sample.n, snapshot)
