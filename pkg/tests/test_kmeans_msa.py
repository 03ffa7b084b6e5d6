import numpy as np
import pytest

from agent_logit.errors import EstimationError
from agent_logit.estimation import kmeans_cluster, msa_update, relative_change
from agent_logit.estimation.estimator import align_labels


def _blobs(seed=0):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    points = np.concatenate([c + rng.normal(scale=0.3, size=(30, 2)) for c in centers])
    truth = np.repeat(np.arange(3), 30)
    return points, truth, centers


def test_kmeans_separates_blobs():
    points, truth, centers = _blobs()
    km = kmeans_cluster(points, 3, seed=5)

    # every planted blob maps to exactly one cluster
    for b in range(3):
        assert len(set(km.labels[truth == b])) == 1
    assert sorted(km.sizes.tolist()) == [30, 30, 30]
    for c in centers:
        assert np.min(np.linalg.norm(km.centroids - c, axis=1)) < 0.3


def test_kmeans_is_deterministic_given_seed():
    points, _, _ = _blobs(1)
    a = kmeans_cluster(points, 3, seed=9)
    b = kmeans_cluster(points, 3, seed=9)

    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.centroids, b.centroids)


def test_kmeans_with_identical_points_keeps_all_labels_valid():
    points = np.ones((5, 2))
    km = kmeans_cluster(points, 2, seed=0)

    assert km.labels.min() >= 0
    assert km.labels.max() < 2
    np.testing.assert_allclose(km.centroids[km.labels], points)


def test_kmeans_rejects_more_clusters_than_points():
    with pytest.raises(EstimationError, match="exceeds"):
        kmeans_cluster(np.zeros((2, 3)), 3, seed=0)


def test_align_labels_undoes_a_permutation():
    reference = np.array([[0.0, 0.0], [5.0, 5.0], [-5.0, 5.0]])
    shuffled = reference[[2, 0, 1]] + 0.1
    perm = align_labels(shuffled, reference)

    assert perm.tolist() == [2, 0, 1]


def test_msa_weights():
    prior = np.array([1.0, -2.0])
    y = np.array([3.0, 2.0])

    np.testing.assert_array_equal(msa_update(prior, y, 0), y)
    np.testing.assert_allclose(msa_update(prior, y, 1), [2.0, 0.0])
    np.testing.assert_allclose(msa_update(prior, y, 3), 0.75 * prior + 0.25 * y)
    np.testing.assert_array_equal(msa_update(y, y, 7), y)
    with pytest.raises(ValueError):
        msa_update(prior, y, -1)


def test_relative_change_uses_floor_for_small_priors():
    old = np.array([[2.0, -4.0], [0.0, 0.0]])
    new = np.array([[2.0, -3.0], [0.0, 1e-5]])

    # cluster 0: 1/4; cluster 1: 1e-5 / 1e-3
    assert relative_change(new, old, floor=1e-3) == pytest.approx(0.25)
    assert relative_change(old, old, floor=1e-3) == 0.0
    assert relative_change(np.array([0.0, 1e-4]), np.zeros(2), floor=1e-3) == pytest.approx(0.1)
