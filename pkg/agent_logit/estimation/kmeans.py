from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from agent_logit.errors import EstimationError


@njit(parallel=True)
def assign_kernel(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray, dist2: np.ndarray) -> None:
    """
    Numba-parallel nearest-centroid assignment.
    Ties go to the lowest cluster index; each point is independent, so the
    result does not depend on the thread count.
    """
    n = points.shape[0]
    k = centroids.shape[0]
    d = points.shape[1]

    for i in prange(n):
        best = np.inf
        arg = 0
        for c in range(k):
            acc = 0.0
            for l in range(d):
                diff = points[i, l] - centroids[c, l]
                acc += diff * diff
            if acc < best:
                best = acc
                arg = c
        labels[i] = arg
        dist2[i] = best


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    iterations: int
    # times a cluster came out empty during Lloyd iterations
    empty_events: int = 0

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.centroids.shape[0])


def _plus_plus_init(points: np.ndarray, M: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((M, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for c in range(1, M):
        total = d2.sum()
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centroids[c] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centroids[c]) ** 2, axis=1))
    return centroids


def _centroid_means(points: np.ndarray, labels: np.ndarray, old: np.ndarray) -> np.ndarray:
    M = old.shape[0]
    sums = np.zeros_like(old)
    np.add.at(sums, labels, points)
    counts = np.bincount(labels, minlength=M)
    out = old.copy()
    filled = counts > 0
    out[filled] = sums[filled] / counts[filled, None]
    return out


def kmeans_cluster(points: np.ndarray, M: int, seed: int, max_iter: int = 100) -> KMeansResult:
    """
    Lloyd's algorithm with k-means++ seeding.

    An empty cluster is reseeded with the point farthest from its centroid
    among clusters holding more than one point. When every such point sits
    on its centroid (no spread left) the cluster stays empty.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    if M < 1:
        raise EstimationError(f"M must be >= 1, got {M}")
    if M > n:
        raise EstimationError(f"M={M} exceeds the number of points ({n})")

    rng = np.random.default_rng(seed)
    centroids = _plus_plus_init(points, M, rng)
    labels = np.full(n, -1, dtype=np.int64)
    dist2 = np.empty(n)
    empty_events = 0
    it = 0

    for it in range(1, max_iter + 1):
        new_labels = np.empty(n, dtype=np.int64)
        assign_kernel(points, centroids, new_labels, dist2)

        counts = np.bincount(new_labels, minlength=M)
        for c in np.flatnonzero(counts == 0):
            empty_events += 1
            donors = counts[new_labels] > 1
            if not donors.any():
                break
            cand = np.where(donors, dist2, -1.0)
            far = int(np.argmax(cand))
            if cand[far] <= 0.0:
                continue
            counts[new_labels[far]] -= 1
            new_labels[far] = c
            counts[c] = 1
            dist2[far] = 0.0

        centroids = _centroid_means(points, new_labels, centroids)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels

    return KMeansResult(labels=labels, centroids=centroids, iterations=it, empty_events=empty_events)
