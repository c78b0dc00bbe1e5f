"""Kernel k-means and Adjusted Rand evaluation.

Lloyd iterations expressed purely through kernel entries: the squared
distance from point i to the centroid of cluster c is

    K_ii - 2 mean_{j in c} K_ij + mean_{j,l in c} K_jl.

Restarts use a farthest-first seeding from a random start point; empty
clusters are repaired by reseeding with the point farthest from its current
centroid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import check_labels, check_seed, check_square_symmetric

__all__ = ["ClusteringResult", "kernel_kmeans", "KernelKMeans", "adjusted_rand_index"]


@dataclass
class ClusteringResult:
    assignments: np.ndarray
    objective: float
    n_init_used: int
    iterations: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)  # best restart, per iteration


def _point_distances(k, diag, center):
    return diag + diag[center] - 2.0 * k[:, center]


def _farthest_first(k, diag, n_clusters, rng):
    n = diag.shape[0]
    centers = [int(rng.integers(n))]
    min_d = _point_distances(k, diag, centers[0])
    while len(centers) < n_clusters:
        nxt = int(np.argmax(min_d))
        if min_d[nxt] <= 0.0:
            # duplicates: deterministically take the first unused index
            unused = np.setdiff1d(np.arange(n), centers)
            nxt = int(unused[0])
        centers.append(nxt)
        min_d = np.minimum(min_d, _point_distances(k, diag, nxt))
    return centers


def _centroid_distances(k, diag, assign, n_clusters):
    n = diag.shape[0]
    dist = np.empty((n, n_clusters))
    block_mean = np.empty(n_clusters)
    for c in range(n_clusters):
        idx = np.flatnonzero(assign == c)
        if idx.size == 0:
            dist[:, c] = np.inf
            block_mean[c] = np.inf
            continue
        m1 = k[:, idx].mean(axis=1)
        m2 = k[np.ix_(idx, idx)].mean()
        dist[:, c] = diag - 2.0 * m1 + m2
        block_mean[c] = m2
    return dist, block_mean


def _objective(k, diag, assign, n_clusters):
    total = float(diag.sum())
    for c in range(n_clusters):
        idx = np.flatnonzero(assign == c)
        if idx.size:
            total -= float(k[np.ix_(idx, idx)].sum()) / idx.size
    return total


def _lloyd(k, diag, n_clusters, rng, max_iter):
    n = diag.shape[0]
    centers = _farthest_first(k, diag, n_clusters, rng)
    point_d = np.stack([_point_distances(k, diag, c) for c in centers], axis=1)
    assign = np.argmin(point_d, axis=1)
    assign[centers] = np.arange(n_clusters)
    trace = []
    for it in range(1, max_iter + 1):
        dist, _ = _centroid_distances(k, diag, assign, n_clusters)
        new_assign = np.argmin(dist, axis=1)
        for c in range(n_clusters):
            if np.any(new_assign == c):
                continue
            # reseed an empty cluster with the point farthest from its
            # centroid, among clusters that can spare a member
            own = dist[np.arange(n), new_assign].copy()
            counts = np.bincount(new_assign, minlength=n_clusters)
            own[counts[new_assign] <= 1] = -np.inf
            new_assign[int(np.argmax(own))] = c
        trace.append(_objective(k, diag, new_assign, n_clusters))
        if np.array_equal(new_assign, assign):
            assign = new_assign
            break
        assign = new_assign
    return assign, trace[-1], it, trace


def kernel_kmeans(k, n_clusters, n_init=10, max_iter=300, seed=None) -> ClusteringResult:
    """Best-of-``n_init`` kernel k-means on a precomputed PSD kernel matrix."""
    k = check_square_symmetric(k, tol=1e-8, name="kernel")
    n = k.shape[0]
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters={n_clusters} must lie in [1, {n}]")
    if n_init < 1:
        raise ValueError("n_init must be positive")
    rng = check_seed(seed)
    diag = np.diag(k).copy()
    best = None
    iterations = []
    for _ in range(n_init):
        assign, obj, iters, trace = _lloyd(k, diag, n_clusters, rng, max_iter)
        iterations.append(iters)
        if best is None or obj < best[1] - 1e-12:
            best = (assign, obj, trace)
    return ClusteringResult(
        assignments=best[0],
        objective=float(best[1]),
        n_init_used=n_init,
        iterations=iterations,
        objective_trace=[float(v) for v in best[2]],
    )


class KernelKMeans(BaseEstimator, ClusterMixin):
    """Kernel k-means on a precomputed kernel matrix.

    ``fit`` takes the (n, n) kernel itself, mirroring estimators with
    ``affinity="precomputed"``.

    Attributes
    ----------
    labels_ : ndarray of shape (n,)
    objective_ : float
        Final within-cluster kernel-distance sum.
    result_ : ClusteringResult
    """

    def __init__(self, n_clusters=2, n_init=10, max_iter=300, random_state=None):
        self.n_clusters = n_clusters
        self.n_init = n_init
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        result = kernel_kmeans(X, self.n_clusters, n_init=self.n_init,
                               max_iter=self.max_iter, seed=self.random_state)
        self.result_ = result
        self.labels_ = result.assignments
        self.objective_ = result.objective
        return self


def _comb2(counts):
    counts = counts.astype(np.float64)
    return counts * (counts - 1.0) / 2.0


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected pair-counting agreement between two partitions.

    1 for identical partitions (up to label permutation), about 0 for
    independent ones.  When both partitions are trivial the denominator
    vanishes; identical partitions then score 1, everything else 0.
    """
    a = check_labels(a, name="first partition")
    b = check_labels(b, n=a.shape[0], name="second partition")
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least two items to compare partitions")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    na, nb = ai.max() + 1, bi.max() + 1
    table = np.bincount(ai * nb + bi, minlength=na * nb).reshape(na, nb)
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    total = n * (n - 1.0) / 2.0
    expected = sum_a * sum_b / total
    maximum = 0.5 * (sum_a + sum_b)
    if maximum == expected:
        identical = (np.count_nonzero(table) == max(na, nb)
                     and na == nb)
        warnings.warn("degenerate partitions: adjusted Rand denominator is zero")
        return 1.0 if identical else 0.0
    return float((sum_ij - expected) / (maximum - expected))
