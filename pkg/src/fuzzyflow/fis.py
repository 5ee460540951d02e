"""Sparse fuzzy rule base built from clusters, with interpolative inference.

One rule per cluster. A rule's antecedents are triangular sets per feature;
only their defuzzified values take part in inference: an observation weights
every rule by inverse squared distance to the rule's defuzzified antecedent
vector, and the output is the weighted sum of defuzzified consequents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from fuzzyflow.core import (
    BinaryLabel,
    DataError,
    InternalError,
    ModelError,
    TrafficClass,
    parse_class,
)
from fuzzyflow.fcm import ClusterModel

DEFAULT_SPREAD = 3.0


@dataclass(frozen=True)
class TriangularSet:
    a: float
    b: float
    c: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.a, self.b, self.c)):
            raise DataError("triangular set points must be finite")
        if not self.a <= self.b <= self.c:
            raise DataError(f"triangular set needs a <= b <= c, got {(self.a, self.b, self.c)}")

    def membership(self, x: float) -> float:
        if x == self.b:
            return 1.0
        if x < self.b:
            return 0.0 if x <= self.a else (x - self.a) / (self.b - self.a)
        return 0.0 if x >= self.c else (self.c - x) / (self.c - self.b)

    def as_tuple(self) -> tuple:
        return (self.a, self.b, self.c)


def defuzzify(t: TriangularSet) -> float:
    """(a + 2b + c) / 4."""
    return (t.a + 2.0 * t.b + t.c) / 4.0


@dataclass(frozen=True)
class FuzzyRule:
    antecedents: tuple      # TriangularSet per kept feature
    consequent: TriangularSet
    cls: TrafficClass

    @property
    def defuzzified_antecedent(self) -> np.ndarray:
        return np.array([defuzzify(t) for t in self.antecedents])


def consequent_for(cls: TrafficClass) -> TriangularSet:
    code = float(int(cls))
    return TriangularSet(code - 1.0, code, code + 1.0)


@dataclass
class FuzzyRuleBase:
    rules: list
    feature_names: tuple = ()
    _r: np.ndarray = field(init=False, repr=False, default=None)
    _out: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self.feature_names = tuple(self.feature_names)
        if self.rules:
            h = len(self.rules[0].antecedents)
            if any(len(r.antecedents) != h for r in self.rules):
                raise DataError("rules have differing antecedent counts")
            if self.feature_names and len(self.feature_names) != h:
                raise DataError("feature name count does not match antecedent count")
            self._r = np.vstack([r.defuzzified_antecedent for r in self.rules])
            self._out = np.array([defuzzify(r.consequent) for r in self.rules])

    def __len__(self) -> int:
        return len(self.rules)

    @property
    def r(self) -> np.ndarray:
        """(c, h) defuzzified antecedent vectors."""
        self._require()
        return self._r

    @property
    def outputs(self) -> np.ndarray:
        """Defuzzified consequent per rule."""
        self._require()
        return self._out

    @property
    def classes(self) -> np.ndarray:
        return np.array([int(r.cls) for r in self.rules], dtype=int)

    @property
    def anchors(self) -> dict:
        """Class code -> defuzzified consequent anchor, for classes with a rule."""
        return {int(r.cls): defuzzify(r.consequent) for r in self.rules}

    def _require(self):
        if not self.rules:
            raise ModelError("rule base is empty")

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "rules": [
                {
                    "class": r.cls.label,
                    "antecedents": [list(t.as_tuple()) for t in r.antecedents],
                    "consequent": list(r.consequent.as_tuple()),
                }
                for r in self.rules
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FuzzyRuleBase":
        rules = [
            FuzzyRule(
                antecedents=tuple(TriangularSet(*map(float, t)) for t in r["antecedents"]),
                consequent=TriangularSet(*map(float, r["consequent"])),
                cls=parse_class(r["class"]),
            )
            for r in data["rules"]
        ]
        return cls(rules, tuple(data.get("feature_names", ())))


def rules_from_clusters(model: ClusterModel, X, spread: float = DEFAULT_SPREAD,
                        feature_names: Sequence[str] = ()) -> FuzzyRuleBase:
    """Translate each labeled cluster into one rule.

    Antecedent apex = cluster center; feet = apex -/+ ``spread`` times the
    membership-weighted standard deviation (weights ``u**m``, the same ones
    the center uses), clipped to [0, 1].
    """
    if model.labels is None:
        raise DataError("cluster model must be labeled before building rules")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    W = model.memberships ** model.m
    if W.shape[1] != len(X):
        raise DataError("cluster memberships do not match the data")
    rules = []
    for i in range(model.c):
        w = W[i]
        total = w.sum()
        if total <= 0:
            raise InternalError(f"cluster {i} has zero total membership weight")
        center = model.centers[i]
        sigma = np.sqrt(w @ (X - center) ** 2 / total)
        lo = np.clip(center - spread * sigma, 0.0, 1.0)
        hi = np.clip(center + spread * sigma, 0.0, 1.0)
        apex = np.clip(center, lo, hi)
        antecedents = tuple(TriangularSet(float(a), float(b), float(c)) for a, b, c in zip(lo, apex, hi))
        cls_ = TrafficClass(model.labels[i])
        rules.append(FuzzyRule(antecedents, consequent_for(cls_), cls_))
    return FuzzyRuleBase(rules, tuple(feature_names))


def rule_weights_batch(R, base: FuzzyRuleBase) -> np.ndarray:
    """(N, c) interpolation weights for N observations.

    ``W_i = 1 / sum_d (|r* - r_i| / |r* - r_d|)^2``. An observation that
    coincides with one or more rule points splits all weight evenly among them.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    r = base.r
    if R.shape[1] != r.shape[1]:
        raise DataError(f"observation has {R.shape[1]} features, rule base expects {r.shape[1]}")
    diff = R[:, None, :] - r[None, :, :]
    d2 = np.einsum("nch,nch->nc", diff, diff)
    W = np.empty_like(d2)
    zero = d2 == 0
    hit = zero.any(axis=1)
    if np.any(~hit):
        d = d2[~hit]
        inv = d.min(axis=1, keepdims=True) / d
        W[~hit] = inv / inv.sum(axis=1, keepdims=True)
    if np.any(hit):
        z = zero[hit].astype(float)
        W[hit] = z / z.sum(axis=1, keepdims=True)
    return W


def rule_weights(observation, base: FuzzyRuleBase) -> np.ndarray:
    return rule_weights_batch(observation, base)[0]


@dataclass
class Inference:
    score: float
    predicted: TrafficClass
    confidence: dict         # TrafficClass -> summed weight
    weights: np.ndarray

    @property
    def degree_of_maliciousness(self) -> float:
        return float(sum(w for c, w in self.confidence.items() if c.is_malicious))


@dataclass
class BatchInference:
    scores: np.ndarray          # (N,)
    predicted: np.ndarray       # (N,) class codes
    confidence: np.ndarray      # (N, 7) summed weight per class code
    weights: np.ndarray         # (N, c)

    @property
    def degree(self) -> np.ndarray:
        return self.confidence[:, [int(c) for c in TrafficClass if c.is_malicious]].sum(axis=1)

    @property
    def binary(self) -> np.ndarray:
        """True where malicious."""
        return ~(self.confidence[:, int(TrafficClass.NORMAL)] > 0.5)


def decode(scores, base: FuzzyRuleBase) -> np.ndarray:
    """Nearest consequent anchor per score; ties go to the lower class code."""
    anchors = sorted(base.anchors.items())
    codes = np.array([c for c, _ in anchors])
    values = np.array([v for _, v in anchors])
    dist = np.abs(np.asarray(scores, dtype=float)[:, None] - values[None, :])
    return codes[np.argmin(dist, axis=1)]


def infer_batch(R, base: FuzzyRuleBase) -> BatchInference:
    W = rule_weights_batch(R, base)
    scores = W @ base.outputs
    conf = np.zeros((len(W), len(TrafficClass)))
    for i, code in enumerate(base.classes):
        conf[:, code] += W[:, i]
    return BatchInference(scores, decode(scores, base), conf, W)


def infer(observation, base: FuzzyRuleBase) -> Inference:
    """Score, predicted class and per-class confidence for one observation."""
    out = infer_batch(observation, base)
    conf = {TrafficClass(k): float(out.confidence[0, k]) for k in TrafficClass}
    return Inference(float(out.scores[0]), TrafficClass(int(out.predicted[0])), conf, out.weights[0])


def classify_binary(observation, base: FuzzyRuleBase) -> tuple:
    """(BinaryLabel, degree of maliciousness).

    Benign iff the summed weight of Normal-class rules exceeds 0.5.
    """
    res = infer(observation, base)
    normal = res.confidence[TrafficClass.NORMAL]
    label = BinaryLabel.BENIGN if normal > 0.5 else BinaryLabel.MALICIOUS
    return label, res.degree_of_maliciousness
