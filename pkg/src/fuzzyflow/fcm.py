"""Fuzzy C-means clustering and cluster-count selection.

Memberships ``U`` are stored cluster-major, shape ``(c, n)``, so ``U[:, j]``
is the membership column of sample ``j`` and sums to one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from fuzzyflow.core import DataError, InternalError, ParameterError, TrafficClass

log = logging.getLogger(__name__)

SELECT_MAX_ITERS = 3000
# WCSD keeps shrinking as c grows, so a strict minimum almost always picks the
# largest candidate; counts within this relative band of the minimum are ties.
DEFAULT_WCSD_RTOL = 0.25


@dataclass(frozen=True)
class FcmConfig:
    m: float = 2.0
    max_iters: int = 300
    tol: float = 1e-8
    restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.m > 1:
            raise ParameterError(f"fuzziness m must be > 1, got {self.m}")
        if not self.tol > 0:
            raise ParameterError("tol must be > 0")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be >= 1")
        if self.restarts < 1:
            raise ParameterError("restarts must be >= 1")


@dataclass
class ClusterModel:
    c: int
    m: float
    centers: np.ndarray          # (c, h)
    memberships: np.ndarray      # (c, n)
    objective: float
    n_iter: int = 0
    trace: list = field(default_factory=list)
    labels: Optional[list] = None       # TrafficClass per cluster
    quality: dict = field(default_factory=dict)

    @property
    def hard_labels(self) -> np.ndarray:
        return hard_assign(self.memberships)

    def to_dict(self, include_memberships: bool = True) -> dict:
        out = {
            "c": self.c,
            "m": self.m,
            "centers": self.centers.tolist(),
            "objective": self.objective,
            "n_iter": self.n_iter,
            "labels": None if self.labels is None else [TrafficClass(l).label for l in self.labels],
            "quality": dict(self.quality),
        }
        if include_memberships:
            out["memberships"] = self.memberships.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ClusterModel":
        from fuzzyflow.core import parse_class

        centers = np.asarray(data["centers"], dtype=float)
        U = np.asarray(data.get("memberships", np.zeros((len(centers), 0))), dtype=float)
        labels = data.get("labels")
        return cls(
            c=int(data["c"]), m=float(data["m"]), centers=centers,
            memberships=U.reshape(len(centers), -1), objective=float(data["objective"]),
            n_iter=int(data.get("n_iter", 0)),
            labels=None if labels is None else [parse_class(l) for l in labels],
            quality=dict(data.get("quality", {})),
        )


def hard_assign(U: np.ndarray) -> np.ndarray:
    """Cluster index of maximal membership per sample; lowest index wins ties."""
    return np.argmax(U, axis=0)


def squared_distances(X: np.ndarray, V: np.ndarray) -> np.ndarray:
    """(c, n) matrix of squared Euclidean distances between centers and samples."""
    diff = V[:, None, :] - X[None, :, :]
    return np.einsum("cnh,cnh->cn", diff, diff)


def update_memberships(d2: np.ndarray, m: float) -> np.ndarray:
    """Membership update from squared center distances.

    A sample sitting exactly on a center gets full membership there (split
    evenly if several centers coincide with it).
    """
    c, n = d2.shape
    U = np.empty((c, n))
    zero = d2 == 0
    hit = zero.any(axis=0)
    if np.any(~hit):
        d = d2[:, ~hit]
        # (d_i / d_k)^(2/(m-1)) == (d2_i / d2_k)^(1/(m-1)); scale by the column min for stability
        ratio = (d / d.min(axis=0)) ** (-1.0 / (m - 1.0))
        U[:, ~hit] = ratio / ratio.sum(axis=0)
    if np.any(hit):
        z = zero[:, hit].astype(float)
        U[:, hit] = z / z.sum(axis=0)
    return U


def update_centers(X: np.ndarray, U: np.ndarray, m: float) -> np.ndarray:
    W = U ** m
    total = W.sum(axis=1)
    if np.any(total <= 0):
        raise InternalError("cluster lost all membership weight")
    return (W @ X) / total[:, None]


def objective(X: np.ndarray, U: np.ndarray, V: np.ndarray, m: float) -> float:
    return float(np.sum(U ** m * squared_distances(X, V)))


def _check_data(X, c: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("FCM needs a non-empty 2-D data matrix")
    if not np.all(np.isfinite(X)):
        raise DataError("FCM data contains non-finite values")
    if isinstance(c, bool) or int(c) != c or c < 1:
        raise ParameterError(f"cluster count must be a positive integer, got {c!r}")
    if c > X.shape[0]:
        raise ParameterError(f"cluster count {c} exceeds sample count {X.shape[0]}")
    return X


def _run_once(X, U, m, max_iters, tol, callback):
    trace = []
    prev = np.inf
    for it in range(1, max_iters + 1):
        V = update_centers(X, U, m)
        U = update_memberships(squared_distances(X, V), m)
        J = objective(X, U, V, m)
        trace.append(J)
        if callback is not None:
            callback(it, U, V, J)
        if abs(prev - J) < tol:
            break
        prev = J
    return U, V, trace


def fcm_fit(X, c: int, config: FcmConfig = FcmConfig(),
            callback: Callable | None = None) -> ClusterModel:
    """Fit FCM with ``config.restarts`` random initializations; keep the lowest J_m.

    Each restart starts from a random membership matrix (uniform Dirichlet per
    sample) and alternates center and membership updates until the objective
    changes by less than ``tol`` or ``max_iters`` is reached.
    ``callback(iteration, U, V, J)`` is invoked after every iteration.
    """
    X = _check_data(X, c)
    c = int(c)
    rng = np.random.default_rng(config.seed)
    best = None
    for _ in range(config.restarts):
        U0 = rng.dirichlet(np.ones(c), size=X.shape[0]).T
        U, V, trace = _run_once(X, U0, config.m, config.max_iters, config.tol, callback)
        if best is None or trace[-1] < best[2][-1]:
            best = (U, V, trace)
    U, V, trace = best
    return ClusterModel(c=c, m=config.m, centers=V, memberships=U,
                        objective=trace[-1], n_iter=len(trace), trace=trace)


def predict_memberships(model: ClusterModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return update_memberships(squared_distances(X, model.centers), model.m)


# -- validity indices ------------------------------------------------------

def wcsd(model: ClusterModel, X, metric: str = "cityblock") -> float:
    """Within-cluster sum of distances under hard assignment.

    ``cityblock`` sums coordinate-wise absolute differences to the center;
    ``sqeuclidean`` is the squared-distance alternative.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    diff = X - model.centers[hard_assign(model.memberships)]
    if metric == "cityblock":
        return float(np.abs(diff).sum())
    if metric == "sqeuclidean":
        return float((diff ** 2).sum())
    raise ParameterError(f"unknown WCSD metric {metric!r}")


def fpc(model_or_U) -> float:
    """Partition coefficient: mean over samples of the summed squared memberships."""
    U = model_or_U.memberships if isinstance(model_or_U, ClusterModel) else np.asarray(model_or_U)
    return float(np.sum(U ** 2) / U.shape[1])


def silhouette_samples(X, labels, chunk: int = 2048) -> np.ndarray:
    """Per-sample silhouette (b - a) / max(a, b) with Euclidean distances.

    Points alone in their cluster score 0, as do points with a = b = 0.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    labels = np.asarray(labels)
    ids, inv = np.unique(labels, return_inverse=True)
    if len(ids) < 2:
        raise ParameterError("silhouette needs at least 2 non-empty clusters")
    n, k = len(X), len(ids)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), inv] = 1.0
    sizes = onehot.sum(axis=0)
    sq = np.einsum("ij,ij->i", X, X)
    s = np.zeros(n)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * X[start:stop] @ X.T
        D = np.sqrt(np.maximum(d2, 0.0))
        rows = np.arange(start, stop)
        D[rows - start, rows] = 0.0
        sums = D @ onehot                                   # (chunk, k)
        own = inv[start:stop]
        own_size = sizes[own]
        a = np.where(own_size > 1, sums[rows - start, own] / np.maximum(own_size - 1, 1), 0.0)
        mean_other = sums / sizes[None, :]
        mean_other[rows - start, own] = np.inf
        b = mean_other.min(axis=1)
        denom = np.maximum(a, b)
        with np.errstate(invalid="ignore", divide="ignore"):
            val = np.where(denom > 0, (b - a) / denom, 0.0)
        val[own_size == 1] = 0.0
        s[start:stop] = val
    return s


def silhouette(X, labels) -> tuple:
    """(per-sample silhouette values, their mean)."""
    s = silhouette_samples(X, labels)
    return s, float(s.mean())


def score_model(model: ClusterModel, X, metric: str = "cityblock") -> dict:
    hard = model.hard_labels
    try:
        sil = silhouette(X, hard)[1] if len(np.unique(hard)) > 1 else float("nan")
    except ParameterError:
        sil = float("nan")
    quality = {"wcsd": wcsd(model, X, metric), "fpc": fpc(model), "mean_silhouette": sil}
    model.quality = quality
    return quality


@dataclass
class CandidateScore:
    c: int
    wcsd: float
    fpc: float
    mean_silhouette: float
    objective: float
    n_iter: int
    model: ClusterModel = field(repr=False, default=None)

    def row(self) -> dict:
        return {"c": self.c, "wcsd": self.wcsd, "fpc": self.fpc,
                "mean_silhouette": self.mean_silhouette,
                "objective": self.objective, "n_iter": self.n_iter}


def choose_c(rows: Sequence[CandidateScore], wcsd_rtol: float = DEFAULT_WCSD_RTOL) -> int:
    """Pick the cluster count from scored candidates.

    Candidates whose WCSD is within ``wcsd_rtol`` (relative) of the minimum
    count as tied on WCSD; ties go to the highest mean silhouette, then to
    the smallest c. ``wcsd_rtol=0`` is the plain minimum-WCSD rule.
    """
    if not rows:
        raise ParameterError("no candidate cluster counts")
    if wcsd_rtol < 0:
        raise ParameterError("wcsd_rtol must be >= 0")
    best_w = min(r.wcsd for r in rows)
    tied = [r for r in rows if r.wcsd <= best_w * (1.0 + wcsd_rtol) + 1e-12]

    def sil(r):
        return r.mean_silhouette if np.isfinite(r.mean_silhouette) else -np.inf

    return min(tied, key=lambda r: (-sil(r), r.c)).c


def select_c(X, candidates: Iterable[int], config: FcmConfig = FcmConfig(),
             max_iters: int = SELECT_MAX_ITERS, wcsd_rtol: float = DEFAULT_WCSD_RTOL,
             metric: str = "cityblock") -> tuple:
    """Fit every candidate cluster count and choose one.

    Returns ``(c_star, diagnostics)``; each diagnostics entry carries the
    scores and the fitted model for that candidate.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    candidates = sorted(set(int(c) for c in candidates))
    if not candidates:
        raise ParameterError("candidate range is empty")
    n = len(X)
    bad = [c for c in candidates if c < 2 or c > n - 1]
    if bad:
        raise ParameterError(f"candidates must lie in [2, {n - 1}]; got {bad}")
    cfg = FcmConfig(m=config.m, max_iters=max_iters, tol=config.tol,
                    restarts=config.restarts, seed=config.seed)
    rows = []
    for c in candidates:
        model = fcm_fit(X, c, cfg)
        q = score_model(model, X, metric)
        rows.append(CandidateScore(c, q["wcsd"], q["fpc"], q["mean_silhouette"],
                                   model.objective, model.n_iter, model))
        log.debug("c=%d wcsd=%.4f fpc=%.4f sil=%.4f", c, q["wcsd"], q["fpc"], q["mean_silhouette"])
    return choose_c(rows, wcsd_rtol), rows


def label_clusters(model: ClusterModel, y) -> list:
    """Label each cluster with the majority class of its hard members.

    A cluster with no hard members falls back to the membership-weighted
    class vote. Mutates and returns ``model.labels``.
    """
    y = np.asarray(y, dtype=int)
    U = model.memberships
    if U.shape[1] != len(y):
        raise DataError("label count does not match the clustered sample count")
    if np.any(y < 0):
        raise DataError("cluster labeling needs a label for every sample")
    hard = hard_assign(U)
    labels = []
    for i in range(model.c):
        members = y[hard == i]
        if len(members):
            votes = np.bincount(members, minlength=len(TrafficClass)).astype(float)
        else:
            votes = np.array([U[i, y == int(k)].sum() for k in TrafficClass])
        labels.append(TrafficClass(int(np.argmax(votes))))
    model.labels = labels
    return labels
