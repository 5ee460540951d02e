import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fuzzyflow.core import BinaryLabel, DataError, ModelError, TrafficClass
from fuzzyflow.fcm import ClusterModel
from fuzzyflow.fis import (
    FuzzyRule,
    FuzzyRuleBase,
    TriangularSet,
    classify_binary,
    consequent_for,
    decode,
    defuzzify,
    infer,
    infer_batch,
    rule_weights,
    rules_from_clusters,
)


def _base(points, codes):
    rules = []
    for p, code in zip(points, codes):
        p = np.atleast_1d(np.asarray(p, dtype=float))
        cls = TrafficClass(code)
        rules.append(FuzzyRule(tuple(TriangularSet(x, x, x) for x in p), consequent_for(cls), cls))
    return FuzzyRuleBase(rules)


def test_defuzzify_examples():
    assert defuzzify(TriangularSet(0.0, 0.5, 1.0)) == 0.5
    assert defuzzify(TriangularSet(0.0, 0.0, 1.0)) == 0.25
    assert defuzzify(TriangularSet(0.2, 0.2, 0.2)) == pytest.approx(0.2)
    assert defuzzify(consequent_for(TrafficClass.WORM)) == 6.0


def test_triangular_set_validation_and_membership():
    with pytest.raises(DataError):
        TriangularSet(0.5, 0.2, 1.0)
    with pytest.raises(DataError):
        TriangularSet(0.0, float("nan"), 1.0)
    t = TriangularSet(0.0, 0.5, 1.0)
    assert t.membership(0.5) == 1.0 and t.membership(0.25) == 0.5 and t.membership(1.2) == 0.0
    assert TriangularSet(0.3, 0.3, 0.3).membership(0.3) == 1.0


def test_consequents():
    for cls in TrafficClass:
        assert consequent_for(cls).as_tuple() == (int(cls) - 1.0, float(int(cls)), int(cls) + 1.0)


def _cluster_model(X, U, labels, m=2.0):
    X = np.asarray(X, dtype=float).reshape(len(X), -1)
    U = np.asarray(U, dtype=float)
    W = U ** m
    V = (W @ X) / W.sum(axis=1, keepdims=True)
    model = ClusterModel(len(U), m, V, U, 0.0)
    model.labels = list(labels)
    return model, X


def test_one_dim_cluster_antecedent():
    # hard members {0.2, 0.4}: mean 0.3, sigma 0.1, feet at 0.3 -/+ 0.3
    model, X = _cluster_model([0.2, 0.4], [[1.0, 1.0]], [TrafficClass.BOTNET])
    base = rules_from_clusters(model, X)
    t = base.rules[0].antecedents[0]
    assert t.as_tuple() == pytest.approx((0.0, 0.3, 0.6))
    assert base.rules[0].cls is TrafficClass.BOTNET


def test_identical_points_collapse_and_clipping():
    model, X = _cluster_model([0.7, 0.7, 0.7], [[1, 1, 1]], [TrafficClass.NORMAL])
    assert rules_from_clusters(model, X).rules[0].antecedents[0].as_tuple() == pytest.approx((0.7, 0.7, 0.7))
    model, X = _cluster_model([0.0, 1.0], [[1, 1]], [TrafficClass.NORMAL])
    assert rules_from_clusters(model, X).rules[0].antecedents[0].as_tuple() == pytest.approx((0.0, 0.5, 1.0))


def test_unlabeled_model_rejected():
    model = ClusterModel(1, 2.0, np.zeros((1, 1)), np.ones((1, 2)), 0.0)
    with pytest.raises(DataError):
        rules_from_clusters(model, np.zeros((2, 1)))


def test_weight_examples():
    base = _base([[0.0], [0.5], [1.0]], [0, 1, 2])
    w = rule_weights([0.25], base)
    raw = np.array([16.0, 16.0, 16.0 / 9.0])
    assert w == pytest.approx(raw / raw.sum())
    assert rule_weights([0.5], base).tolist() == [0.0, 1.0, 0.0]
    two = _base([[0.0], [0.0], [1.0]], [0, 1, 2])
    assert rule_weights([0.0], two).tolist() == [0.5, 0.5, 0.0]
    with pytest.raises(DataError):
        rule_weights([0.1, 0.2], base)


def _brute(obs, pts, outs):
    d = [sum((a - b) ** 2 for a, b in zip(obs, p)) for p in pts]
    if any(x == 0 for x in d):
        hits = [i for i, x in enumerate(d) if x == 0]
        w = [1 / len(hits) if i in hits else 0.0 for i in range(len(pts))]
    else:
        w = [1.0 / sum(d[i] / d[k] for k in range(len(pts))) for i in range(len(pts))]
    return w, sum(wi * o for wi, o in zip(w, outs))


@given(st.integers(0, 2**31), st.integers(1, 7), st.integers(1, 4))
def test_weights_and_score_match_brute_force(seed, c, h):
    rng = np.random.default_rng(seed)
    pts = rng.random((c, h))
    codes = rng.integers(0, 7, size=c)
    base = _base(pts, codes)
    obs = rng.random((5, h))
    out = infer_batch(obs, base)
    assert np.allclose(out.weights.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(out.weights >= 0)
    for row, w_got, s_got in zip(obs, out.weights, out.scores):
        w, s = _brute(row.tolist(), pts.tolist(), codes.tolist())
        assert np.allclose(w_got, w, atol=1e-9)
        assert s_got == pytest.approx(s, abs=1e-9)
        assert codes.min() - 1e-12 <= s_got <= codes.max() + 1e-12


def test_locality():
    base = _base([[0.1, 0.1], [0.9, 0.9]], [0, 6])
    near = rule_weights([0.12, 0.1], base)
    assert near[0] > 0.99
    farther = rule_weights([0.3, 0.3], base)
    assert farther[0] < near[0]


def test_infer_examples():
    base = _base([[1.0, 0.0], [0.0, 1.0]], [0, 3])
    res = infer([1.0, 0.0], base)
    assert res.predicted is TrafficClass.NORMAL and res.score == 0.0
    base = _base([[1.0, 0.0], [0.0, 1.0]], [3, 4])
    res = infer([0.5, 0.5], base)
    assert res.score == pytest.approx(3.5)
    assert res.predicted is TrafficClass.PORT_SWEEP


def test_decode_uses_present_anchors():
    base = _base([[0.0], [1.0]], [0, 6])
    assert decode(np.array([2.9, 3.0, 3.1, -5.0, 9.0]), base).tolist() == [0, 0, 6, 0, 6]


def test_classify_binary_examples():
    base = _base([[0.0], [1.0]], [0, 6])
    # distances 0.6 and 0.4 give weights 0.4 / 0.6 after normalization
    label, degree = classify_binary([0.6], base)
    w = rule_weights([0.6], base)
    assert w == pytest.approx([0.4 ** 2 / (0.4 ** 2 + 0.6 ** 2), 0.6 ** 2 / (0.4 ** 2 + 0.6 ** 2)])
    assert label is BinaryLabel.MALICIOUS and degree == pytest.approx(w[1])
    label, degree = classify_binary([0.0], base)
    assert label is BinaryLabel.BENIGN and degree == 0.0
    # exactly one half on Normal is not benign
    label, _ = classify_binary([0.5], base)
    assert label is BinaryLabel.MALICIOUS


def test_confidence_sums_per_class():
    base = _base([[0.0], [0.2], [1.0]], [6, 6, 0])
    res = infer([0.1], base)
    assert res.confidence[TrafficClass.WORM] == pytest.approx(res.weights[0] + res.weights[1])
    assert sum(res.confidence.values()) == pytest.approx(1.0)
    assert res.degree_of_maliciousness == pytest.approx(res.confidence[TrafficClass.WORM])


def test_serialization_round_trip():
    rng = np.random.default_rng(2)
    base = _base(rng.random((4, 3)), [0, 2, 4, 6])
    back = FuzzyRuleBase.from_dict(base.to_dict())
    assert np.array_equal(back.r, base.r) and back.classes.tolist() == [0, 2, 4, 6]
    obs = rng.random((10, 3))
    assert np.array_equal(infer_batch(obs, back).scores, infer_batch(obs, base).scores)


def test_empty_rule_base():
    with pytest.raises(ModelError):
        infer([0.1], FuzzyRuleBase([]))
