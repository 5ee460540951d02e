import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial import cKDTree
from scipy.stats import chisquare

from fuzzyflow.balance import BalanceConfig, balance_targets, rebalance, smote, undersample
from fuzzyflow.core import ATTACK_CLASSES, DataError, FlowKey, ParameterError, TrafficClass
from fuzzyflow.features import FeatureTable


def test_undersample_identity_and_determinism():
    items = list(range(100))
    assert undersample(items, 100, seed=1) == items
    a, b = undersample(items, 30, seed=7), undersample(items, 30, seed=7)
    assert a == b and len(set(a)) == 30
    with pytest.raises(ParameterError):
        undersample(items, 101)


def test_undersample_uniform_selection():
    counts = np.zeros(50)
    for s in range(10_000):
        counts[undersample(np.arange(50), 10, seed=s)] += 1
    assert chisquare(counts).pvalue > 1e-3


def test_smote_identity():
    X = np.random.default_rng(0).random((6, 3))
    assert np.array_equal(smote(X, 6, 5, seed=0), X)


def test_smote_two_points_on_segment():
    a, b = np.array([0.0, 0.0]), np.array([1.0, 2.0])
    out = smote(np.vstack([a, b]), 3, k_neighbors=1, seed=4)
    p = out[2]
    lam = p[0]
    assert 0 <= lam <= 1 and np.allclose(p, a + lam * (b - a))


def _segment_oracle(X, synth, k, tol=1e-9):
    """Every synthetic point lies on a segment from an original to one of its k nearest neighbours."""
    n = len(X)
    k = min(k, n - 1)
    D = np.linalg.norm(X[:, None] - X[None], axis=2)
    np.fill_diagonal(D, np.inf)
    for p in synth:
        ok = False
        for i in range(n):
            kth = np.sort(D[i])[k - 1]
            for j in np.flatnonzero(D[i] <= kth + 1e-12):
                d = X[j] - X[i]
                dd = d @ d
                lam = 0.0 if dd == 0 else float((p - X[i]) @ d / dd)
                if -tol <= lam <= 1 + tol and np.linalg.norm(X[i] + lam * d - p) <= tol:
                    ok = True
                    break
            if ok:
                break
        if not ok:
            return False
    return True


@given(st.integers(2, 25), st.integers(1, 8), st.integers(0, 60), st.integers(0, 2**31))
def test_smote_segment_membership(n, k, extra, seed):
    X = np.random.default_rng(seed).random((n, 3))
    out = smote(X, n + extra, k, seed=seed)
    assert out.shape == (n + extra, 3)
    assert np.array_equal(out[:n], X)
    assert _segment_oracle(X, out[n:], k)


def test_smote_neighbours_are_knn():
    X = np.random.default_rng(2).random((30, 2))
    out, base, nbr, lam = smote(X, 200, 3, seed=1, return_parents=True)
    _, knn = cKDTree(X).query(X, k=4)
    for b, j in zip(base, nbr):
        assert j in knn[b][1:]
    assert np.allclose(out[30:], X[base] + lam[:, None] * (X[nbr] - X[base]))


def test_smote_errors_and_clamp(caplog):
    with pytest.raises(DataError):
        smote(np.zeros((1, 2)), 3)
    with pytest.raises(ParameterError):
        smote(np.zeros((4, 2)), 2)
    out = smote(np.random.rand(3, 2), 10, k_neighbors=5, seed=0)
    assert len(out) == 10 and "using 2" in caplog.text


def _table(counts, rng):
    y = np.concatenate([np.full(n, int(c)) for c, n in counts.items()])
    X = rng.random((len(y), 4))
    keys = [FlowKey("s", "d", float(i)) for i in range(len(y))]
    return FeatureTable(tuple("abcd"), keys, X, y)


def _counts(table):
    return {c: int(np.sum(table.y == int(c))) for c in TrafficClass}


def test_rebalance_example_oversample(rng):
    counts = {TrafficClass.NORMAL: 700, **{c: 30 for c in ATTACK_CLASSES}}
    out = rebalance(_table(counts, rng), BalanceConfig(seed=3))
    got = _counts(out)
    assert got[TrafficClass.NORMAL] == 700
    assert all(got[c] == 50 for c in ATTACK_CLASSES)
    assert out.synthetic.sum() == 6 * 20


def test_rebalance_example_undersample(rng):
    counts = {TrafficClass.NORMAL: 7000, **{c: 50 for c in ATTACK_CLASSES}}
    got = _counts(rebalance(_table(counts, rng), BalanceConfig(seed=3)))
    assert got[TrafficClass.NORMAL] == 700
    assert all(got[c] == 50 for c in ATTACK_CLASSES)


def test_rebalance_fixed_point(rng):
    counts = {TrafficClass.NORMAL: 700, **{c: 50 for c in ATTACK_CLASSES}}
    table = _table(counts, rng)
    out = rebalance(table, BalanceConfig())
    assert np.array_equal(out.X, table.X) and np.array_equal(out.y, table.y)


@given(st.integers(20, 3000), st.lists(st.integers(2, 400), min_size=6, max_size=6), st.integers(0, 99))
def test_rebalance_ratio_and_equal_subclasses(benign, attacks, seed):
    rng = np.random.default_rng(seed)
    counts = {TrafficClass.NORMAL: benign, **dict(zip(ATTACK_CLASSES, attacks))}
    b_t, m_t = balance_targets(counts, BalanceConfig())
    if any(m_t[c] < 1 for c in ATTACK_CLASSES):
        return
    out = rebalance(_table(counts, rng), BalanceConfig(seed=seed))
    got = _counts(out)
    B = got[TrafficClass.NORMAL]
    M = sum(got[c] for c in ATTACK_CLASSES)
    assert abs(7 * M - 3 * B) <= 10
    sub = [got[c] for c in ATTACK_CLASSES]
    assert max(sub) - min(sub) <= 1
    # synthetic rows inherit their class and follow the originals
    assert np.all(out.synthetic[np.argmax(out.synthetic):]) or not out.synthetic.any()


def test_rebalance_errors(rng):
    counts = {TrafficClass.NORMAL: 70, **{c: 5 for c in ATTACK_CLASSES}}
    counts[TrafficClass.WORM] = 1
    with pytest.raises(DataError):
        rebalance(_table(counts, rng))
    del counts[TrafficClass.WORM]
    with pytest.raises(DataError):
        rebalance(_table(counts, rng))


def test_rebalance_deterministic(rng):
    counts = {TrafficClass.NORMAL: 300, **{c: 20 + 3 * i for i, c in enumerate(ATTACK_CLASSES)}}
    table = _table(counts, rng)
    a, b = rebalance(table, BalanceConfig(seed=5)), rebalance(table, BalanceConfig(seed=5))
    assert np.array_equal(a.X, b.X) and a.keys == b.keys


def test_ratio_parsing():
    assert BalanceConfig.from_ratio("7:3").benign_parts == 7
    with pytest.raises(ParameterError):
        BalanceConfig.from_ratio("seven")
    with pytest.raises(ParameterError):
        BalanceConfig(k_neighbors=0)
