"""Clustering evaluation: accuracy under the optimal label mapping,
normalized mutual information, and the Calinski-Harabasz score."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass
class Partition:
    """Cluster labels over N samples, with an explicit cluster count."""

    labels: np.ndarray
    num_clusters: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1:
            raise ValueError("labels must be a 1-D integer array")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.num_clusters):
            raise ValueError(
                f"labels must lie in [0, {self.num_clusters}), got range "
                f"[{self.labels.min()}, {self.labels.max()}]"
            )

    @classmethod
    def from_labels(cls, labels, num_clusters=None):
        labels = np.asarray(labels, dtype=np.int64)
        if num_clusters is None:
            num_clusters = int(labels.max()) + 1 if labels.size else 0
        return cls(labels, num_clusters)


def _coerce(p) -> Partition:
    return p if isinstance(p, Partition) else Partition.from_labels(p)


def confusion_matrix(pred, truth):
    """counts[i, j] = number of samples with predicted cluster i, true cluster j."""
    p, t = _coerce(pred), _coerce(truth)
    if p.labels.shape != t.labels.shape:
        raise ValueError(
            f"length mismatch: {p.labels.shape[0]} predictions vs "
            f"{t.labels.shape[0]} ground-truth labels"
        )
    counts = np.zeros((p.num_clusters, t.num_clusters), dtype=np.int64)
    np.add.at(counts, (p.labels, t.labels), 1)
    return counts


def clustering_accuracy(pred, truth):
    """Best achievable agreement under a one-to-one cluster-label mapping.

    Solves the optimal assignment on the contingency counts (padded square
    when the cluster counts differ), so the result does not depend on which
    side the mapping is applied to.
    """
    counts = confusion_matrix(pred, truth)
    n = int(counts.sum())
    if n == 0:
        raise ValueError("empty partitions")
    size = max(counts.shape)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[: counts.shape[0], : counts.shape[1]] = counts
    rows, cols = linear_sum_assignment(padded, maximize=True)
    return float(padded[rows, cols].sum()) / n


def nmi(pred, truth):
    """Mutual information normalized by the larger marginal entropy.

    Natural logs throughout; the cell terms use the integer ratio
    (n_ij * N) / (n_i * n_j), which makes constructed-independent partitions
    score exactly 0 and identical partitions exactly 1. Defined as 1 when
    both partitions are single-cluster and 0 when exactly one is.
    """
    counts = confusion_matrix(pred, truth)
    n = int(counts.sum())
    if n == 0:
        raise ValueError("empty partitions")
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)

    def entropy(marginal):
        h = 0.0
        for c in marginal:
            if c > 0:
                h += (c / n) * np.log(n / c)
        return h

    h_pred, h_truth = entropy(row), entropy(col)
    mi = 0.0
    for i in range(counts.shape[0]):
        for j in range(counts.shape[1]):
            c = counts[i, j]
            if c > 0:
                mi += (c / n) * np.log((int(c) * n) / (int(row[i]) * int(col[j])))
    denom = max(h_pred, h_truth)
    if denom == 0.0:
        return 1.0  # both partitions single-cluster
    return float(min(1.0, max(0.0, mi / denom)))


def ch_score(points, labels):
    """Calinski-Harabasz: trace(between) / trace(within) * (N - k) / (k - 1).

    Between-cluster scatter weights each centroid's squared distance to the
    global mean by the cluster size; within-cluster scatter sums squared
    distances to the own centroid. Higher means more compact and better
    separated. Zero within-scatter is reported as +inf with a warning.
    """
    y = np.asarray(points, dtype=np.float64)
    part = _coerce(labels)
    if y.ndim != 2 or y.shape[0] != part.labels.shape[0]:
        raise ValueError("points must be (N, D) matching the label count")
    k = part.num_clusters
    n = y.shape[0]
    if k < 2:
        raise ValueError(f"ch_score needs at least 2 clusters, got {k}")
    if n <= k:
        raise ValueError(f"ch_score needs more samples ({n}) than clusters ({k})")
    sizes = np.bincount(part.labels, minlength=k)
    if np.any(sizes == 0):
        raise ValueError(f"empty cluster {int(np.argmin(sizes))}")

    center = y.mean(axis=0)
    within = 0.0
    between = 0.0
    for q in range(k):
        members = y[part.labels == q]
        centroid = members.mean(axis=0)
        within += float(np.sum((members - centroid) ** 2))
        between += sizes[q] * float(np.sum((centroid - center) ** 2))
    if within == 0.0:
        warnings.warn("zero within-cluster scatter; score is infinite",
                      RuntimeWarning)
        return float("inf")
    return float((between / within) * (n - k) / (k - 1))
