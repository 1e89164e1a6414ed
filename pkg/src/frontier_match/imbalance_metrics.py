"""Imbalance measures: multivariate-histogram L1 and average Mahalanobis imbalance."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DegenerateSampleError, InsufficientDataError, SchemaError
from .sample_builder import MatchingSample

log = logging.getLogger(__name__)

RIDGE_FACTOR = 1e-8
# relative singular-value cutoff for declaring columns exactly collinear
COLLINEAR_RTOL = 1e-10
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class Categorical:
    """One bin per distinct value."""


@dataclass(frozen=True)
class QuantileBins:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("quantile bin count must be >= 1")


@dataclass(frozen=True)
class FixedEdges:
    """Interior cut points; bin i holds values in (edges[i-1], edges[i]]."""

    edges: tuple[float, ...]

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("fixed edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)


BinRule = Union[Categorical, QuantileBins, FixedEdges]


@dataclass(frozen=True)
class BinningSpec:
    rules: dict[str, BinRule]

    @classmethod
    def default(cls, sample: MatchingSample) -> "BinningSpec":
        """Raw levels for binary/categorical columns, quantile bins otherwise.

        Continuous columns get ``k = min(10, number of distinct values)``.
        """
        rules: dict[str, BinRule] = {}
        for j, cov in enumerate(sample.schema.entries):
            if cov.kind == "continuous":
                rules[cov.name] = QuantileBins(max(1, min(10, len(np.unique(sample.X[:, j])))))
            else:
                rules[cov.name] = Categorical()
        return cls(rules)

    @classmethod
    def from_json(cls, doc: dict, sample: MatchingSample | None = None) -> "BinningSpec":
        """``{"name": {"rule": "categorical" | "quantile" | "edges", "k": .., "edges": [..]}}``.

        Columns missing from ``doc`` fall back to the default rule for ``sample``.
        """
        rules: dict[str, BinRule] = dict(cls.default(sample).rules) if sample is not None else {}
        for name, d in doc.items():
            kind = d.get("rule")
            if kind == "categorical":
                rules[name] = Categorical()
            elif kind == "quantile":
                rules[name] = QuantileBins(int(d["k"]))
            elif kind == "edges":
                rules[name] = FixedEdges(tuple(d["edges"]))
            else:
                raise SchemaError(f"unknown binning rule {kind!r} for {name!r}")
        return cls(rules)

    def to_json(self) -> dict:
        out = {}
        for name, r in self.rules.items():
            if isinstance(r, Categorical):
                out[name] = {"rule": "categorical"}
            elif isinstance(r, QuantileBins):
                out[name] = {"rule": "quantile", "k": r.k}
            else:
                out[name] = {"rule": "edges", "edges": list(r.edges)}
        return out


@dataclass(frozen=True)
class BinnedSample:
    strata: dict[tuple[int, ...], tuple[int, int]]
    total_treated: int
    total_control: int


def nearest_rank_quantile(sorted_values: np.ndarray, p: float) -> float:
    """Smallest value with at least a fraction ``p`` of the data at or below it."""
    n = len(sorted_values)
    rank = max(1, math.ceil(p * n - 1e-12))
    return float(sorted_values[min(rank, n) - 1])


def quantile_edges(values: np.ndarray, k: int) -> np.ndarray:
    s = np.sort(np.asarray(values, dtype=float))
    return np.unique([nearest_rank_quantile(s, j / k) for j in range(1, k)])


def bin_column(values: np.ndarray, rule: BinRule, name: str = "") -> np.ndarray:
    """Integer bin index per value; categorical codes follow sorted level order."""
    values = np.asarray(values, dtype=float)
    if isinstance(rule, Categorical):
        return np.unique(values, return_inverse=True)[1].astype(np.int64)
    if isinstance(rule, QuantileBins):
        edges = quantile_edges(values, rule.k)
        if rule.k > 1 and np.all(values == values[0]):
            log.warning("covariate %r is constant; quantile binning collapses to one bin", name)
        return np.searchsorted(edges, values, side="left").astype(np.int64)
    return np.searchsorted(np.asarray(rule.edges), values, side="left").astype(np.int64)


def stratum_codes(sample: MatchingSample, spec: BinningSpec) -> tuple[list[tuple[int, ...]], np.ndarray]:
    """Sorted stratum signatures and, per unit, the index of its stratum."""
    missing = [n for n in sample.schema.names if n not in spec.rules]
    if missing:
        raise SchemaError(f"binning spec does not cover {missing}")
    cols = [bin_column(sample.X[:, j], spec.rules[name], name) for j, name in enumerate(sample.schema.names)]
    sig = np.stack(cols, axis=1) if cols else np.zeros((sample.n, 0), dtype=np.int64)
    uniq, codes = np.unique(sig, axis=0, return_inverse=True)
    return [tuple(int(v) for v in row) for row in uniq], codes.reshape(-1)


def coarsen(sample: MatchingSample, spec: BinningSpec) -> BinnedSample:
    signatures, codes = stratum_codes(sample, spec)
    t = np.bincount(codes[sample.treated], minlength=len(signatures))
    c = np.bincount(codes[~sample.treated], minlength=len(signatures))
    strata = {s: (int(a), int(b)) for s, a, b in zip(signatures, t, c)}
    return BinnedSample(strata, int(t.sum()), int(c.sum()))


def l1_from_counts(t: np.ndarray, c: np.ndarray, total_t: int, total_c: int) -> float:
    if total_t <= 0 or total_c <= 0:
        raise DegenerateSampleError("L1 needs treated and control units")
    return 0.5 * float(np.abs(t / total_t - c / total_c).sum())


def l1_imbalance(binned: BinnedSample) -> float:
    counts = np.array(list(binned.strata.values()), dtype=float).reshape(-1, 2)
    return l1_from_counts(counts[:, 0], counts[:, 1], binned.total_treated, binned.total_control)


@dataclass(frozen=True)
class CovarianceModel:
    """Pooled covariance and the inverse used for distances.

    ``inverse`` acts on the ``retained`` columns only and already includes
    ``ridge`` on its diagonal when one was needed.
    """

    matrix: np.ndarray
    inverse: np.ndarray
    retained: tuple[int, ...]
    dropped_columns: tuple[int, ...] = ()
    ridge: float = 0.0
    whitener: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def whiten(self, X: np.ndarray) -> np.ndarray:
        """Coordinates in which Euclidean distance equals Mahalanobis distance."""
        X = np.asarray(X, dtype=float)
        return X[..., list(self.retained)] @ self.whitener

    def to_csv(self, names: tuple[str, ...] | None = None) -> str:
        names = names or tuple(f"x{j}" for j in range(self.dim))
        lines = ["," + ",".join(names)]
        for name, row in zip(names, self.matrix):
            lines.append(name + "," + ",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def _independent_columns(S: np.ndarray, candidates: list[int]) -> list[int]:
    """Greedy left-to-right selection of linearly independent columns.

    Works on the correlation matrix so the decision is scale free.
    """
    sd = np.sqrt(np.diag(S))
    kept: list[int] = []
    for j in candidates:
        trial = kept + [j]
        R = S[np.ix_(trial, trial)] / np.outer(sd[trial], sd[trial])
        sv = np.linalg.svd(R, compute_uv=False)
        if sv[-1] > COLLINEAR_RTOL * sv[0]:
            kept.append(j)
    return kept


def covariance_from_matrix(S: np.ndarray) -> CovarianceModel:
    S = np.asarray(S, dtype=float)
    d = S.shape[0]
    nonconstant = [j for j in range(d) if S[j, j] > 0]
    retained = _independent_columns(S, nonconstant) if nonconstant else []
    if not retained:
        raise InsufficientDataError("every covariate column is constant; Mahalanobis distance undefined")
    dropped = tuple(j for j in range(d) if j not in retained)
    if dropped:
        log.info("dropping constant/collinear covariate columns %s", dropped)
    Sr = S[np.ix_(retained, retained)]
    ridge = 0.0
    if np.linalg.cond(Sr) > MAX_CONDITION:
        ridge = RIDGE_FACTOR * float(np.trace(Sr)) / len(retained)
        log.warning("covariance ill-conditioned; adding ridge %.3g", ridge)
        Sr = Sr + ridge * np.eye(len(retained))
    inverse = np.linalg.inv(Sr)
    inverse = 0.5 * (inverse + inverse.T)
    # inverse = L L^T  =>  (x-y)^T inverse (x-y) = |L^T (x-y)|^2
    whitener = np.linalg.cholesky(inverse)
    return CovarianceModel(S, inverse, tuple(retained), dropped, ridge, whitener)


def estimate_covariance(sample: MatchingSample | np.ndarray) -> CovarianceModel:
    """Pooled (treated + control) covariance, denominator n - 1."""
    X = sample.X if isinstance(sample, MatchingSample) else np.asarray(sample, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise InsufficientDataError("covariance needs at least two units")
    if X.shape[1] < 1:
        raise InsufficientDataError("covariance needs at least one covariate")
    S = np.cov(X, rowvar=False, ddof=1).reshape(X.shape[1], X.shape[1])
    return covariance_from_matrix(S)


def mahalanobis(x_i, x_j, cov: CovarianceModel) -> float:
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    if x_i.shape != (cov.dim,) or x_j.shape != (cov.dim,):
        raise ValueError(f"expected vectors of length {cov.dim}, got {x_i.shape} and {x_j.shape}")
    diff = (x_i - x_j)[list(cov.retained)]
    q = float(diff @ cov.inverse @ diff)
    return math.sqrt(max(q, 0.0))


def cross_distances(Za: np.ndarray, Zb: np.ndarray) -> np.ndarray:
    """Euclidean distances between rows of two whitened matrices.

    Computed from coordinate differences (never via |a|^2 + |b|^2 - 2ab) so
    identical points give exactly zero and d(a, b) == d(b, a) bit for bit.
    """
    return np.sqrt(((Za[:, None, :] - Zb[None, :, :]) ** 2).sum(axis=-1))


def nearest_opposite(Z: np.ndarray, treated: np.ndarray, chunk_elems: int = 4_000_000) -> tuple[np.ndarray, np.ndarray]:
    """Distance to, and index of, each unit's nearest unit in the other group.

    Ties go to the lowest index.
    """
    treated = np.asarray(treated, dtype=bool)
    t_idx = np.flatnonzero(treated)
    c_idx = np.flatnonzero(~treated)
    if len(t_idx) == 0 or len(c_idx) == 0:
        raise DegenerateSampleError("nearest-opposite matching needs both groups")
    dist = np.empty(len(Z))
    match = np.empty(len(Z), dtype=np.int64)
    for rows, cols in ((t_idx, c_idx), (c_idx, t_idx)):
        step = max(1, chunk_elems // max(1, len(cols) * Z.shape[1]))
        for s in range(0, len(rows), step):
            block = rows[s:s + step]
            D = cross_distances(Z[block], Z[cols])
            k = D.argmin(axis=1)
            dist[block] = D[np.arange(len(block)), k]
            match[block] = cols[k]
    return dist, match


def ami(sample: MatchingSample, cov: CovarianceModel) -> float:
    """Mean over all units of the Mahalanobis distance to the nearest opposite unit."""
    sample.require_both_groups()
    dist, _ = nearest_opposite(cov.whiten(sample.X), sample.treated)
    return float(dist.mean())
