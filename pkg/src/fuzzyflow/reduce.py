"""Feature reduction: variance filter, Pearson pruning, deviation-range pruning,
then min-max normalization of the survivors.

The order is fixed (variance -> Pearson -> deviation -> normalize) and every
dropped feature is recorded with the reason it was dropped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from fuzzyflow.core import DataError, InternalError, ParameterError, TrafficClass
from fuzzyflow.features import FeatureTable, feature_names

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-6
DEFAULT_PEARSON = 0.99
DEFAULT_MIN_SUPPORT = 0.2
DEFAULT_QUANTILES = (0.10, 0.90)


@dataclass
class ReductionReport:
    kept: list
    dropped: list = field(default_factory=list)    # [(name, reason)]
    scalers: dict = field(default_factory=dict)    # name -> (min, max)

    def to_dict(self) -> dict:
        return {
            "kept": list(self.kept),
            "dropped": [{"name": n, "reason": r} for n, r in self.dropped],
            "scalers": {n: [float(lo), float(hi)] for n, (lo, hi) in self.scalers.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ReductionReport":
        return cls(
            kept=list(data["kept"]),
            dropped=[(d["name"], d["reason"]) for d in data.get("dropped", [])],
            scalers={n: (float(v[0]), float(v[1])) for n, v in data["scalers"].items()},
        )

    def scaler_arrays(self) -> tuple:
        lo = np.array([self.scalers[n][0] for n in self.kept], dtype=float)
        hi = np.array([self.scalers[n][1] for n in self.kept], dtype=float)
        return lo, hi


def _check_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise DataError("feature matrix is empty")
    if not np.all(np.isfinite(X)):
        raise DataError("feature matrix contains non-finite values")
    return X


def variance_filter(X, names: Sequence[str], epsilon: float = DEFAULT_EPSILON) -> set:
    """Names of columns whose sample variance (ddof=1) is below ``epsilon``."""
    X = _check_matrix(X)
    if X.shape[0] < 2:
        raise DataError("variance filter needs at least 2 samples")
    var = X.var(axis=0, ddof=1)
    return {name for name, v in zip(names, var) if v < epsilon}


def pearson_prune(X, names: Sequence[str], threshold: float = DEFAULT_PEARSON) -> dict:
    """Map dropped name -> the earlier kept name it is redundant with.

    Columns are visited in the given (schema) order; a column is dropped when
    ``|R| >= threshold`` against any earlier column that is still kept.
    """
    if not 0 < threshold <= 1:
        raise ParameterError(f"correlation threshold must be in (0, 1], got {threshold}")
    X = _check_matrix(X)
    if np.any(X.std(axis=0) == 0):
        raise InternalError("zero-variance column reached Pearson pruning; run the variance filter first")
    R = np.corrcoef(X, rowvar=False) if X.shape[1] > 1 else np.ones((1, 1))
    kept, dropped = [], {}
    for j, name in enumerate(names):
        partner = next((i for i in kept if abs(R[i, j]) >= threshold), None)
        if partner is None:
            kept.append(j)
        else:
            dropped[name] = names[partner]
    return dropped


def deviation_ranges(X, y, kinds: Sequence[str], min_support: float = DEFAULT_MIN_SUPPORT,
                     quantiles: tuple = DEFAULT_QUANTILES) -> list:
    """Per feature, a dict class -> frequent-value range.

    Discrete features: the set of values with relative frequency >= min_support.
    Continuous features: the closed interval between the two quantiles.
    """
    X = _check_matrix(X)
    y = np.asarray(y, dtype=int)
    present = set(np.unique(y).tolist())
    missing = [c.label for c in TrafficClass if int(c) not in present]
    if missing:
        raise DataError(f"deviation method needs every class; missing {missing}")
    ranges = []
    for k, kind in enumerate(kinds):
        per_class = {}
        for c in TrafficClass:
            col = X[y == int(c), k]
            if kind == "discrete":
                values, counts = np.unique(col, return_counts=True)
                per_class[c] = frozenset(values[counts / len(col) >= min_support].tolist())
            else:
                lo, hi = np.quantile(col, quantiles)
                per_class[c] = (float(lo), float(hi))
        ranges.append(per_class)
    return ranges


def _overlap(a, b) -> bool:
    if isinstance(a, frozenset):
        return bool(a & b)
    return max(a[0], b[0]) <= min(a[1], b[1])


def deviation_prune(X, y, names: Sequence[str], kinds: Sequence[str] | None = None,
                    min_support: float = DEFAULT_MIN_SUPPORT,
                    quantiles: tuple = DEFAULT_QUANTILES) -> set:
    """Names of features whose per-class ranges overlap for every pair of classes."""
    if not 0 < min_support <= 1:
        raise ParameterError(f"min_support must be in (0, 1], got {min_support}")
    if kinds is None:
        schema = feature_names().kinds()
        kinds = [schema.get(n, "continuous") for n in names]
    ranges = deviation_ranges(X, y, kinds, min_support, quantiles)
    dropped = set()
    for name, per_class in zip(names, ranges):
        if all(_overlap(per_class[a], per_class[b]) for a, b in combinations(TrafficClass, 2)):
            dropped.add(name)
    return dropped


def fit_normalizer(X) -> list:
    X = _check_matrix(X)
    lo, hi = X.min(axis=0), X.max(axis=0)
    if np.any(hi <= lo):
        raise InternalError("constant column reached the normalizer; run the variance filter first")
    return [(float(a), float(b)) for a, b in zip(lo, hi)]


def apply_normalizer(X, scalers: Sequence[tuple]) -> np.ndarray:
    """Affine map to [0, 1] per column, clamped for out-of-range values."""
    X = np.asarray(X, dtype=float)
    lo = np.array([s[0] for s in scalers], dtype=float)
    hi = np.array([s[1] for s in scalers], dtype=float)
    return np.clip((X - lo) / (hi - lo), 0.0, 1.0)


def denormalize(Z, scalers: Sequence[tuple]) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    lo = np.array([s[0] for s in scalers], dtype=float)
    hi = np.array([s[1] for s in scalers], dtype=float)
    return lo + Z * (hi - lo)


def fit_reduction(table: FeatureTable, epsilon: float = DEFAULT_EPSILON,
                  threshold: float = DEFAULT_PEARSON,
                  min_support: float = DEFAULT_MIN_SUPPORT,
                  use_deviation: bool | None = None) -> ReductionReport:
    """Run the reduction pipeline on training data and return the report.

    The deviation step needs labels covering all classes; with
    ``use_deviation=None`` it runs only when the table is fully labeled.
    """
    names = list(table.names)
    X = _check_matrix(table.X)
    dropped = []

    low_var = variance_filter(X, names, epsilon)
    dropped += [(n, "low_variance") for n in names if n in low_var]
    names = [n for n in names if n not in low_var]

    cols = [table.names.index(n) for n in names]
    corr = pearson_prune(X[:, cols], names, threshold)
    dropped += [(n, f"correlated_with:{corr[n]}") for n in names if n in corr]
    names = [n for n in names if n not in corr]

    if use_deviation is None:
        use_deviation = table.labeled
    if use_deviation:
        cols = [table.names.index(n) for n in names]
        dev = deviation_prune(X[:, cols], table.y, names, min_support=min_support)
        dropped += [(n, "overlapping_deviation") for n in names if n in dev]
        names = [n for n in names if n not in dev]
    else:
        log.warning("deviation pruning skipped: training data is not labeled for every row")

    if not names:
        raise DataError("every feature was dropped during reduction")
    cols = [table.names.index(n) for n in names]
    scalers = fit_normalizer(X[:, cols])
    return ReductionReport(kept=names, dropped=dropped, scalers=dict(zip(names, scalers)))


def transform(table: FeatureTable, report: ReductionReport) -> FeatureTable:
    """Select the kept columns and normalize them with the frozen scalers."""
    missing = [n for n in report.kept if n not in table.names]
    if missing:
        raise DataError(f"input lacks features required by the model: {missing}")
    sub = table.select(report.kept)
    sub.X = apply_normalizer(sub.X, [report.scalers[n] for n in report.kept])
    return sub
