import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.cluster import DBSCAN

from geoadapt import faircluster as fc
from geoadapt.errors import InvalidInputError, InvalidStateError
from geoadapt.synthdata import gaussian_mixture, make_rng


def brute_log_enforcement(features, centroids, i, k):
    logits = [float(f @ centroids[k]) for f in features]
    m = max(logits)
    return logits[i] - (m + math.log(sum(math.exp(x - m) for x in logits)))


def test_contrastive_singleton():
    model = fc.ClusterModel(np.array([[1.0, 2.0]]))
    assert fc.contrastive_cluster_loss([[0.5, 0.1]], [0], model) == 0.0


def test_contrastive_equal_logits():
    model = fc.ClusterModel(np.array([[1.0, 0.0]]))
    loss = fc.contrastive_cluster_loss([[2.0, 1.0], [2.0, -3.0]], [0, 0], model)
    assert abs(loss - 2 * math.log(2)) <= 1e-15


def test_contrastive_and_fairness_bruteforce():
    rng = make_rng(0)
    feats = rng.standard_normal((12, 4))
    cents = rng.standard_normal((3, 4))
    assign = rng.integers(-1, 3, 12)
    model = fc.ClusterModel(cents, transitive=rng.standard_normal((3, 4)))
    brute = -sum(brute_log_enforcement(feats, cents, i, k) for i, k in enumerate(assign) if k >= 0)
    assert abs(fc.contrastive_cluster_loss(feats, assign, model) - brute) <= 1e-12
    alpha = 0.05
    fair = alpha * brute
    for k in range(3):
        logits = [float(f @ cents[k]) for f in feats]
        m = max(logits)
        lse = m + math.log(sum(math.exp(x - m) for x in logits))
        fair -= float(model.transitive[k] @ cents[k]) - lse
    assert abs(fc.fairness_cluster_loss(feats, assign, model, alpha) - fair) <= 1e-12


def test_fairness_reduces_to_contrastive():
    rng = make_rng(1)
    feats, cents = rng.standard_normal((6, 3)), rng.standard_normal((2, 3))
    assign = rng.integers(0, 2, 6)
    model = fc.ClusterModel(cents)
    assert fc.fairness_cluster_loss(feats, assign, model, 1.0, include_transitive=False) == pytest.approx(
        fc.contrastive_cluster_loss(feats, assign, model), abs=1e-14
    )


def test_loss_input_validation():
    model = fc.ClusterModel(np.eye(2))
    with pytest.raises(InvalidInputError):
        fc.contrastive_cluster_loss(np.ones((2, 2)), [0, 5], model)
    with pytest.raises(InvalidInputError):
        fc.contrastive_cluster_loss(np.ones((2, 2)), [-1, -1], model)
    with pytest.raises(InvalidInputError):
        fc.fairness_cluster_loss(np.ones((2, 2)), [0, 1], model, alpha=0)


def test_enforcement_examples():
    assert abs(fc.enforcement_optimum_oracle(None, 4) - 0.25) <= 1e-9
    assert abs(fc.enforcement_optimum_oracle(0.05, 100) - 1 / 120) <= 1e-9
    assert fc.enforcement_gap(0.05, 1000, 10) < 1 / 10 - 1 / 1000


@pytest.mark.parametrize("alpha", [None, 0.05, 0.01])
@pytest.mark.parametrize("L", [5, 50, 500])
def test_enforcement_oracle_matches_closed_form(alpha, L):
    assert abs(fc.enforcement_optimum_oracle(alpha, L, seed=L) - fc.enforcement_closed_form(alpha, L)) <= 1e-6


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5000), st.integers(1, 5000), st.floats(1e-4, 1e3))
def test_gap_shrinkage(a, b, alpha):
    lmin, lmaj = min(a, b), max(a, b)
    if lmaj == lmin:
        lmaj += 1
    assert fc.enforcement_gap(alpha, lmaj, lmin) < fc.enforcement_gap(None, lmaj, lmin)


def test_oracle_validation():
    with pytest.raises(InvalidInputError):
        fc.enforcement_optimum_oracle(None, 0)
    with pytest.raises(InvalidInputError):
        fc.enforcement_optimum_oracle(-1.0, 3)


def test_hinge_examples():
    model = fc.ClusterModel(np.array([[0.0, 0.0], [20.0, 0.0]]))
    assert fc.hinge_prototype_loss([[0.0, 0.0]], [0], model) == 0.0
    near = fc.ClusterModel(np.array([[0.0, 0.0], [3.0, 0.0]]))
    assert fc.hinge_prototype_loss([[0.0, 0.0]], [0], near, delta=10) == 7.0
    assert fc.DEFAULT_MARGIN == 10


def test_prototype_fixed_point_and_hand_value():
    model = fc.ClusterModel(np.array([[1.0, 2.0]]), update_period=1)
    out = fc.prototype_update(model, {0: [[1.0, 2.0], [1.0, 2.0]]})
    np.testing.assert_allclose(out.centroids, [[1.0, 2.0]])
    model = fc.ClusterModel(np.zeros((1, 2)), eta=0.9, update_period=1)
    out = fc.prototype_update(model, {0: [[1.0, 0.0]]})
    np.testing.assert_allclose(out.centroids, [[0.1, 0.0]], atol=1e-15)
    assert np.all(model.centroids == 0)  # the input model is untouched


def test_prototype_defaults_and_schedule():
    model = fc.ClusterModel(np.zeros((1, 2)))
    assert (model.eta, model.update_period, model.bank_cap) == (0.99, 100, 500)
    for _ in range(99):
        model = fc.prototype_update(model, {0: np.ones((10, 2))})
        assert np.all(model.centroids == 0)
    assert len(model.banks[0]) == 500
    model = fc.prototype_update(model, {0: np.ones((1, 2))})
    np.testing.assert_allclose(model.centroids, [[0.01, 0.01]])


def test_frozen_centroids_bit_identical():
    rng = make_rng(2)
    model = fc.ClusterModel(rng.standard_normal((3, 2)), frozen=[False, True, False], update_period=2)
    before = model.centroids[1].copy()
    for _ in range(10):
        model = fc.prototype_update(model, {k: rng.standard_normal((3, 2)) for k in range(3)})
    assert np.array_equal(model.centroids[1], before)
    assert len(model.banks[1]) == 0


def test_model_snapshot_round_trip():
    model = fc.ClusterModel(np.array([[0.1, 0.2]]), step=3)
    data = json.loads(model.to_json())
    back = fc.ClusterModel.from_snapshot(data)
    assert np.array_equal(back.centroids, model.centroids) and back.step == 3


def test_model_validation():
    with pytest.raises(InvalidInputError):
        fc.ClusterModel(np.eye(2), eta=1.5)
    with pytest.raises(InvalidInputError):
        fc.ClusterModel(np.eye(2), transitive=np.eye(3))


def test_repulsion_examples():
    assert fc.cluster_repulsion(np.array([[0.0, 0.0], [30.0, 0.0]])) == 0.0
    assert fc.cluster_repulsion(np.zeros((2, 2)), margin=10) == 400.0
    line = np.array([[0.0], [10.0], [20.0]])
    # adjacent pairs (20 − 10)² each, outer pair at 2∇ contributes 0
    assert fc.cluster_repulsion(line, margin=10) == 200.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 6))
def test_repulsion_zero_iff_separated(seed, k):
    c = make_rng(seed).uniform(-30, 30, (k, 2))
    d = np.linalg.norm(c[:, None] - c[None], axis=2)[np.triu_indices(k, 1)]
    assert (fc.cluster_repulsion(c, 10.0) == 0.0) == bool(np.all(d >= 20.0))


@pytest.mark.parametrize("seed", range(15))
def test_dbscan_matches_sklearn(seed):
    rng = make_rng(seed)
    pts = np.vstack([rng.normal(c, 0.6, (25, 2)) for c in rng.uniform(-6, 6, (3, 2))] + [rng.uniform(-10, 10, (15, 2))])
    eps, min_pts = 0.8, 5
    ours = fc.dbscan(pts, eps, min_pts)
    ref = DBSCAN(eps=eps, min_samples=min_pts).fit_predict(pts)
    assert np.array_equal(ours == -1, ref == -1)
    core = DBSCAN(eps=eps, min_samples=min_pts).fit(pts).core_sample_indices_
    # core points form the same partition (border points may legitimately differ)
    pairs = itertools.combinations(core, 2)
    assert all((ours[i] == ours[j]) == (ref[i] == ref[j]) for i, j in pairs)


def test_unknown_init_two_blobs():
    rng = make_rng(3)
    means = np.array([[0.0, 0.0], [40.0, 0.0]])
    pts = np.vstack([rng.normal(m, 0.5, (40, 2)) for m in means])
    cents = fc.unknown_cluster_init(pts)
    assert cents.shape == (2, 2)
    order = np.argsort(cents[:, 0])
    np.testing.assert_allclose(cents[order], means, atol=0.3)


def test_unknown_init_merges_close_blobs():
    rng = make_rng(4)
    a = rng.normal([0.0, 0.0], 0.3, (30, 2))
    b = rng.normal([12.0, 0.0], 0.3, (30, 2))
    cents = fc.unknown_cluster_init(np.vstack([a, b]))
    assert cents.shape == (1, 2)
    np.testing.assert_allclose(cents[0], 0.5 * (a.mean(axis=0) + b.mean(axis=0)), atol=1e-12)


def test_unknown_init_all_noise():
    pts = np.arange(10.0).reshape(-1, 1) * 100
    assert fc.unknown_cluster_init(pts).shape == (0, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 8))
def test_merge_idempotent(seed, k):
    c = make_rng(seed).uniform(-40, 40, (k, 3))
    once = fc.merge_close_centroids(c, 10.0)
    assert np.array_equal(fc.merge_close_centroids(once, 10.0), once)
    if len(once) > 1:
        d = np.linalg.norm(once[:, None] - once[None], axis=2)[np.triu_indices(len(once), 1)]
        assert np.all(d >= 20.0)


def test_assign_examples():
    cents = np.array([[0.0, 0.0], [5.0, 5.0], [2.0, 0.0], [9.0, 9.0], [7.0, 7.0], [4.0, 0.0]])
    assert fc.assign_nearest([[5.0, 5.0]], cents)[0] == 1
    # equidistant between centroids 2 and 5 goes to 2
    assert fc.assign_nearest([[3.0, 0.0]], cents)[0] == 2
    with pytest.raises(InvalidStateError):
        fc.assign_nearest([[1.0]], np.empty((0, 1)))


def test_assign_bruteforce():
    feats, labels, _ = gaussian_mixture([30, 30, 30], 3, 2.0, 5)
    cents = make_rng(5).standard_normal((4, 3))
    ref = [min(range(4), key=lambda k: (float(np.sum((f - cents[k]) ** 2)), k)) for f in feats]
    assert np.array_equal(fc.assign_nearest(feats, fc.ClusterModel(cents)), ref)
