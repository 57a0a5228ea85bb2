"""Clustering evaluation: ACC, NMI, ARI, weighted modularity, seeded k-means.

ACC maximizes the matched fraction over label bijections (rectangular
Hungarian, so predicted and true cluster counts may differ). NMI uses the
arithmetic mean of entropies. Per-snapshot evaluation always receives only
the nodes present in that snapshot.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import KMeans
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

from .graphs import SnapshotGraph


class MetricError(Exception):
    pass


def _encode(labels) -> np.ndarray:
    labels = np.asarray(labels)
    _, inv = np.unique(labels, return_inverse=True)
    return inv


def contingency_table(truth, pred) -> np.ndarray:
    """K_true x K_pred count matrix; total equals the number of nodes."""
    t, p = _encode(truth), _encode(pred)
    if t.shape != p.shape:
        raise MetricError(f"label lengths differ: {t.shape} vs {p.shape}")
    if t.size == 0:
        raise MetricError("empty label vectors")
    table = np.zeros((t.max() + 1, p.max() + 1), dtype=np.int64)
    np.add.at(table, (t, p), 1)
    return table


def accuracy(truth, pred) -> float:
    """Best-bijection matched fraction (Hungarian on the contingency table)."""
    table = contingency_table(truth, pred)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / table.sum())


def nmi(truth, pred) -> float:
    """Mutual information normalized by the arithmetic mean of entropies.

    Returns 0 when both partitions are single-cluster (zero mean entropy).
    """
    t, p = _encode(truth), _encode(pred)
    if t.shape != p.shape or t.size == 0:
        raise MetricError("invalid label vectors")
    if t.max() == 0 and p.max() == 0:
        return 0.0
    return float(normalized_mutual_info_score(t, p, average_method="arithmetic"))


def ari(truth, pred) -> float:
    t, p = _encode(truth), _encode(pred)
    if t.shape != p.shape:
        raise MetricError("label lengths differ")
    if t.size < 2:
        raise MetricError("ARI needs at least 2 nodes")
    return float(adjusted_rand_score(t, p))


def modularity(g: SnapshotGraph, labels) -> float:
    """Weighted Newman modularity of the given partition."""
    lab = _encode(labels)
    if lab.shape[0] != g.num_nodes:
        raise MetricError("labels do not cover the snapshot nodes")
    w = g.weights
    two_m = w.sum()
    if two_m <= 0:
        raise MetricError("modularity undefined for a zero-weight graph")
    deg = w.sum(axis=1)
    q = 0.0
    for c in range(lab.max() + 1):
        members = lab == c
        q += w[np.ix_(members, members)].sum() / two_m
        q -= (deg[members].sum() / two_m) ** 2
    return float(q)


def kmeans(points: np.ndarray, k: int, seed: int = 0,
           return_centers: bool = False, n_init: int = 10):
    """Seeded k-means: k-means++ restarts, Lloyd, max 300 iters, tol 1e-6."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] < k:
        raise MetricError(f"k-means needs >= {k} points, got {points.shape[0]}")
    km = KMeans(n_clusters=k, n_init=n_init, max_iter=300, tol=1e-6,
                random_state=seed)
    labels = km.fit_predict(points)
    if return_centers:
        return labels, km.cluster_centers_.astype(np.float64)
    return labels
