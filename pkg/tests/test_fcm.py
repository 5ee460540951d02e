import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import silhouette_samples as sk_silhouette

from fuzzyflow.core import DataError, ParameterError, TrafficClass
from fuzzyflow.fcm import (
    CandidateScore,
    ClusterModel,
    FcmConfig,
    choose_c,
    fcm_fit,
    fpc,
    label_clusters,
    objective,
    predict_memberships,
    select_c,
    silhouette,
    silhouette_samples,
    update_memberships,
    wcsd,
)
from tests.reference_fcm import reference_fcm


def _model(centers, U, m=2.0):
    centers = np.asarray(centers, dtype=float)
    if centers.ndim == 1:
        centers = centers[:, None]
    return ClusterModel(len(centers), m, centers, np.asarray(U, dtype=float), 0.0)


def test_single_cluster():
    X = np.random.default_rng(0).random((20, 2))
    model = fcm_fit(X, 1, FcmConfig(restarts=1))
    assert np.all(model.memberships == 1.0)
    assert np.allclose(model.centers[0], X.mean(axis=0))
    assert model.objective == pytest.approx(((X - X.mean(axis=0)) ** 2).sum())


def test_two_points_two_clusters():
    X = np.array([[0.0], [1.0]])
    model = fcm_fit(X, 2, FcmConfig(seed=3))
    assert sorted(np.round(model.centers.ravel(), 6)) == [0.0, 1.0]
    hard = model.hard_labels
    assert hard[0] != hard[1]
    assert model.memberships[hard[0], 0] > 0.99 and model.memberships[hard[1], 1] > 0.99


def test_errors():
    with pytest.raises(ParameterError):
        fcm_fit(np.random.rand(3, 2), 4)
    with pytest.raises(DataError):
        fcm_fit(np.array([[np.nan, 0.0], [1.0, 1.0]]), 1)
    with pytest.raises(ParameterError):
        FcmConfig(m=1.0)


def test_zero_distance_rule():
    d2 = np.array([[0.0, 1.0, 0.0], [4.0, 1.0, 0.0]])
    U = update_memberships(d2, 2.0)
    assert U[:, 0].tolist() == [1.0, 0.0]
    assert U[:, 1].tolist() == [0.5, 0.5]
    assert U[:, 2].tolist() == [0.5, 0.5]


@pytest.mark.parametrize("inst", range(25))
def test_oracle_equivalence(inst):
    rng = np.random.default_rng(1000 + inst)
    n, h, c = int(rng.integers(5, 51)), int(rng.integers(1, 4)), int(rng.choice([2, 3]))
    X = rng.random((n, h))
    seed = int(rng.integers(0, 2**31))
    trace_ok = []

    def check(it, U, V, J):
        trace_ok.append(np.allclose(U.sum(axis=0), 1.0, rtol=0, atol=1e-9))

    model = fcm_fit(X, c, FcmConfig(seed=seed, restarts=1), callback=check)
    U0 = np.random.default_rng(seed).dirichlet(np.ones(c), size=n).T
    J_ref, _, _ = reference_fcm(X.tolist(), U0.tolist())
    assert abs(model.objective - J_ref) <= 1e-6
    assert all(trace_ok)
    assert all(b <= a + 1e-12 for a, b in zip(model.trace, model.trace[1:]))


@given(st.integers(2, 40), st.integers(1, 3), st.integers(2, 4), st.integers(0, 2**31), st.floats(1.2, 4.0))
def test_invariants(n, h, c, seed, m):
    if c > n:
        return
    X = np.random.default_rng(seed).random((n, h))
    model = fcm_fit(X, c, FcmConfig(m=m, seed=seed, restarts=2, max_iters=100))
    U = model.memberships
    assert np.allclose(U.sum(axis=0), 1.0, atol=1e-9)
    assert U.min() >= 0 and U.max() <= 1
    assert np.all(np.isfinite(model.centers)) and model.objective >= 0
    assert all(b <= a + 1e-12 for a, b in zip(model.trace, model.trace[1:]))


def test_restart_determinism_and_permutation():
    X = np.random.default_rng(4).random((40, 2))
    a = fcm_fit(X, 3, FcmConfig(seed=9))
    b = fcm_fit(X, 3, FcmConfig(seed=9))
    assert np.array_equal(a.centers, b.centers) and np.array_equal(a.memberships, b.memberships)
    perm = np.random.default_rng(1).permutation(40)
    c = fcm_fit(X[perm], 3, FcmConfig(seed=9, restarts=10))
    # same optimum up to the stopping tolerance; memberships follow the rows
    order = [int(np.argmin(np.linalg.norm(a.centers - v, axis=1))) for v in c.centers]
    assert sorted(order) == [0, 1, 2]
    assert np.allclose(c.centers, a.centers[order], atol=1e-3)
    assert np.allclose(c.memberships, a.memberships[order][:, perm], atol=1e-3)


def test_wcsd_examples(rng):
    X = np.array([[0.0], [2.0]])
    assert wcsd(_model([1.0], [[1.0, 1.0]]), X) == 2.0
    assert wcsd(_model([0.0, 2.0], [[1, 0], [0, 1]]), X) == 0.0
    X = rng.random((30, 3))
    model = fcm_fit(X, 3, FcmConfig(restarts=2))
    hard = model.hard_labels
    brute = sum(abs(X[j, k] - model.centers[i, k]) for i in range(3) for j in range(30) if hard[j] == i
                for k in range(3))
    assert wcsd(model, X) == pytest.approx(brute, abs=1e-9)
    sq = sum(((X[j] - model.centers[hard[j]]) ** 2).sum() for j in range(30))
    assert wcsd(model, X, "sqeuclidean") == pytest.approx(sq, abs=1e-9)


def test_fpc_examples(rng):
    assert fpc(np.eye(3)) == 1.0
    assert fpc(np.full((4, 10), 0.25)) == pytest.approx(0.25)
    U = rng.dirichlet(np.ones(3), size=12).T
    assert fpc(U) == pytest.approx(sum(U[i, j] ** 2 for i in range(3) for j in range(12)) / 12)


def test_silhouette_examples():
    X = np.array([[0.0], [0.001], [10.0], [10.001]])
    assert silhouette(X, [0, 0, 1, 1])[1] > 0.999
    s = silhouette_samples(np.array([[0.0], [1.0], [2.0]]), [0, 1, 1])
    assert s[0] == 0.0
    assert np.all(silhouette_samples(np.zeros((4, 2)), [0, 0, 1, 1]) == 0)
    with pytest.raises(ParameterError):
        silhouette_samples(np.random.rand(5, 2), [0] * 5)


@pytest.mark.parametrize("seed", range(5))
def test_silhouette_matches_sklearn(seed):
    rng = np.random.default_rng(seed)
    X = rng.random((120, 3))
    labels = rng.integers(0, 4, size=120)
    ours = silhouette_samples(X, labels, chunk=37)
    ref = sk_silhouette(X, labels)
    assert np.allclose(ours, ref, atol=1e-9)
    assert ours.min() >= -1 and ours.max() <= 1


def _blobs(seed, k=7, n_per=40, sd=0.02):
    rng = np.random.default_rng(seed)
    ang = np.linspace(0, 2 * np.pi, k, endpoint=False) + rng.uniform(0, 2 * np.pi)
    C = 0.5 + 0.35 * np.c_[np.cos(ang), np.sin(ang)]
    return np.clip(np.vstack([c + sd * rng.standard_normal((n_per, 2)) for c in C]), 0, 1)


def test_select_c_diagnostics_and_degenerate_range():
    X = _blobs(0)
    c, rows = select_c(X, [2], FcmConfig(restarts=1), max_iters=200)
    assert c == 2 and len(rows) == 1
    c, rows = select_c(X, range(2, 6), FcmConfig(restarts=2), max_iters=500)
    assert [r.c for r in rows] == [2, 3, 4, 5]
    assert all(np.isfinite([r.wcsd, r.fpc, r.mean_silhouette]).all() for r in rows)
    with pytest.raises(ParameterError):
        select_c(X, [], FcmConfig())
    with pytest.raises(ParameterError):
        select_c(X[:5], [5], FcmConfig())


def test_choose_c_rules():
    rows = [CandidateScore(2, 10.0, 0.5, 0.3, 0, 0), CandidateScore(3, 5.0, 0.6, 0.6, 0, 0),
            CandidateScore(4, 4.5, 0.6, 0.5, 0, 0), CandidateScore(5, 4.4, 0.6, 0.6, 0, 0)]
    assert choose_c(rows, 0.0) == 5
    assert choose_c(rows, 0.2) == 3           # 3 ties 5 on silhouette; smaller c wins
    assert choose_c([CandidateScore(2, 1.0, 0.5, float("nan"), 0, 0)], 0.0) == 2


def test_label_clusters_majority():
    U = np.array([[0.9, 0.8, 0.7, 0.1], [0.1, 0.2, 0.3, 0.9]])
    model = _model([[0.0], [1.0]], U)
    labels = label_clusters(model, [2, 2, 0, 5])
    assert labels == [TrafficClass.BOTNET, TrafficClass.SPYING]
    with pytest.raises(DataError):
        label_clusters(model, [1, 2])


def test_predict_memberships_and_serialization(rng):
    X = rng.random((30, 2))
    model = fcm_fit(X, 3, FcmConfig(restarts=2))
    assert np.allclose(predict_memberships(model, X), model.memberships, atol=1e-6)
    label_clusters(model, rng.integers(0, 7, size=30))
    back = ClusterModel.from_dict(model.to_dict())
    assert np.array_equal(back.centers, model.centers) and back.labels == model.labels
    assert objective(X, back.memberships, back.centers, 2.0) == pytest.approx(
        objective(X, model.memberships, model.centers, 2.0))
