"""Class balancing: uniform undersampling and SMOTE oversampling to a fixed
benign:malicious ratio with equal-sized attack subclasses.

All randomness comes from ``numpy.random.default_rng`` (PCG64). Each class
draws from its own generator seeded with ``(seed, class_code)``, so per-class
work is independent of the order classes are processed in.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from fuzzyflow.core import ATTACK_CLASSES, DataError, ParameterError, TrafficClass
from fuzzyflow.features import FeatureTable

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BalanceConfig:
    benign_parts: int = 7
    malicious_parts: int = 3
    k_neighbors: int = 5
    seed: int = 0
    # Largest growth factor for the malicious side before switching to
    # undersampling benign instead.
    max_oversample: float = 2.0

    def __post_init__(self):
        if self.benign_parts < 1 or self.malicious_parts < 1:
            raise ParameterError("ratio parts must be positive")
        if self.k_neighbors < 1:
            raise ParameterError("k_neighbors must be >= 1")
        if self.max_oversample < 1:
            raise ParameterError("max_oversample must be >= 1")

    @classmethod
    def from_ratio(cls, ratio: str, **kwargs) -> "BalanceConfig":
        try:
            b, m = (int(p) for p in str(ratio).split(":"))
        except ValueError:
            raise ParameterError(f"ratio must look like '7:3', got {ratio!r}") from None
        return cls(benign_parts=b, malicious_parts=m, **kwargs)


def _rng(seed, *stream) -> np.random.Generator:
    return np.random.default_rng([int(seed), *map(int, stream)])


def undersample_indices(n_available: int, target_count: int, rng) -> np.ndarray:
    if target_count > n_available:
        raise ParameterError(f"cannot undersample {n_available} samples to {target_count}")
    if target_count < 0:
        raise ParameterError("target_count must be non-negative")
    if target_count == n_available:
        return np.arange(n_available)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return np.sort(rng.choice(n_available, size=target_count, replace=False))


def undersample(samples, target_count: int, seed=0):
    """Uniform random subset without replacement, original order preserved."""
    idx = undersample_indices(len(samples), target_count, seed)
    if isinstance(samples, np.ndarray):
        return samples[idx]
    return [samples[i] for i in idx]


def smote(X, target_count: int, k_neighbors: int = 5, seed=0, return_parents: bool = False):
    """Grow one class to ``target_count`` rows by SMOTE interpolation.

    Originals come first, then synthetic rows ``x + lam * (nb - x)`` with
    ``lam ~ U[0, 1]`` and ``nb`` one of the k nearest same-class neighbours of
    ``x`` (Euclidean). With ``return_parents`` the (base, neighbour) row
    indices and lambdas of the synthetic rows are returned too.
    """
    X = np.asarray(X, dtype=float)
    n = len(X)
    if n < 2:
        raise DataError("SMOTE needs at least 2 samples of a class")
    if target_count < n:
        raise ParameterError(f"SMOTE target {target_count} is below the class size {n}")
    k = int(k_neighbors)
    if k < 1:
        raise ParameterError("k_neighbors must be >= 1")
    if k >= n:
        log.warning("k_neighbors=%d >= class size %d; using %d", k, n, n - 1)
        k = n - 1
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_new = target_count - n
    base = np.empty(n_new, dtype=int)
    nbr = np.empty(n_new, dtype=int)
    lam = np.empty(n_new)
    if n_new:
        _, neighbours = cKDTree(X).query(X, k=k + 1)
        neighbours = np.asarray(neighbours).reshape(n, k + 1)
        # a point is its own nearest neighbour unless it has duplicates
        knn = np.empty((n, k), dtype=int)
        for i in range(n):
            row = [j for j in neighbours[i] if j != i][:k]
            knn[i] = row
        base = rng.integers(0, n, size=n_new)
        nbr = knn[base, rng.integers(0, k, size=n_new)]
        lam = rng.random(n_new)
    synth = X[base] + lam[:, None] * (X[nbr] - X[base])
    out = np.vstack([X, synth]) if n_new else X.copy()
    if return_parents:
        return out, base, nbr, lam
    return out


def balance_targets(counts: dict, config: BalanceConfig) -> tuple:
    """(benign target, {attack class: target}) for the given class counts."""
    benign = counts[TrafficClass.NORMAL]
    malicious = sum(counts[c] for c in ATTACK_CLASSES)
    b, m = config.benign_parts, config.malicious_parts
    wanted_malicious = benign * m / b
    if wanted_malicious <= config.max_oversample * malicious:
        benign_target = benign
        malicious_target = int(round(wanted_malicious))
    else:
        malicious_target = malicious
        benign_target = int(round(malicious * b / m))
    per, extra = divmod(malicious_target, len(ATTACK_CLASSES))
    targets = {c: per + (1 if i < extra else 0) for i, c in enumerate(ATTACK_CLASSES)}
    return benign_target, targets


def rebalance(table: FeatureTable, config: BalanceConfig = BalanceConfig()) -> FeatureTable:
    """Balance a labeled table to the configured benign:malicious ratio.

    Selected original rows keep their input order; synthetic rows follow,
    grouped by class code. Synthetic rows reuse their base sample's key.
    """
    y = table.y
    counts = {c: int(np.sum(y == int(c))) for c in TrafficClass}
    missing = [c.label for c, n in counts.items() if n == 0]
    if missing:
        raise DataError(f"rebalance needs every class; missing {missing}")
    small = [c.label for c in ATTACK_CLASSES if counts[c] < 2]
    if small:
        raise DataError(f"attack classes with fewer than 2 samples: {small}")

    benign_target, targets = balance_targets(counts, config)
    targets[TrafficClass.NORMAL] = benign_target

    keep = np.zeros(len(table), dtype=bool)
    synth_X, synth_keys, synth_y = [], [], []
    for c in TrafficClass:
        rows = np.flatnonzero(y == int(c))
        target = targets[c]
        rng = _rng(config.seed, int(c))
        if target <= len(rows):
            keep[rows[undersample_indices(len(rows), target, rng)]] = True
            continue
        keep[rows] = True
        out, base, _, _ = smote(table.X[rows], target, config.k_neighbors, rng, return_parents=True)
        synth_X.append(out[len(rows):])
        synth_keys.extend(table.keys[rows[i]] for i in base)
        synth_y.extend([int(c)] * len(base))

    kept = table.subset(np.flatnonzero(keep))
    if not synth_X:
        return kept
    X = np.vstack([kept.X] + synth_X)
    return FeatureTable(
        table.names,
        kept.keys + synth_keys,
        X,
        np.concatenate([kept.y, np.array(synth_y, dtype=int)]),
        np.concatenate([kept.synthetic, np.ones(len(synth_y), dtype=bool)]),
    )
