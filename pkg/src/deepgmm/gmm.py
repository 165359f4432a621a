"""Diagonal-covariance Gaussian mixture: densities, responsibilities, EM.

Mixture weights are stored as softmax logits and standard deviations as
logs, so the simplex and positivity constraints hold by construction. All
per-sample quantities are computed in the log domain and normalized with
log-sum-exp.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import SeededRng, check_finite, log_sum_exp

SIGMA_FLOOR = 1e-3

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GmmParams:
    """Mixture parameters: softmax weight logits, means, log standard deviations."""

    weight_logits: np.ndarray  # (m,)
    means: np.ndarray  # (m, D)
    log_sigmas: np.ndarray  # (m, D)

    def __post_init__(self):
        self.weight_logits = np.asarray(self.weight_logits, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.log_sigmas = np.asarray(self.log_sigmas, dtype=np.float64)
        if self.weight_logits.ndim != 1 or self.means.ndim != 2:
            raise ValueError("weight_logits must be 1-D and means 2-D")
        if self.log_sigmas.shape != self.means.shape:
            raise ValueError("log_sigmas shape must match means shape")
        if self.means.shape[0] != self.weight_logits.shape[0]:
            raise ValueError("component count mismatch between logits and means")
        check_finite(self.weight_logits, "weight_logits")
        check_finite(self.means, "means")
        check_finite(self.log_sigmas, "log_sigmas")
        if np.any(self.log_sigmas < np.log(SIGMA_FLOOR) - 1e-12):
            raise ValueError(f"standard deviations below the floor {SIGMA_FLOOR}")

    @property
    def n_components(self):
        return self.weight_logits.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def weights(self):
        """softmax(weight_logits); always sums to 1."""
        shifted = self.weight_logits - np.max(self.weight_logits)
        e = np.exp(shifted)
        return e / e.sum()

    @property
    def log_weights(self):
        return self.weight_logits - log_sum_exp(self.weight_logits)

    @property
    def sigmas(self):
        return np.exp(self.log_sigmas)

    def copy(self):
        return GmmParams(self.weight_logits.copy(), self.means.copy(),
                         self.log_sigmas.copy())


def _check_points(params: GmmParams, y):
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 1
    pts = y[None, :] if single else y
    if pts.ndim != 2 or pts.shape[1] != params.dim:
        raise ValueError(
            f"points must have dimension {params.dim}, got shape {y.shape}"
        )
    return pts, single


def component_log_densities(params: GmmParams, y):
    """(N, m) matrix of per-component log Gaussian densities."""
    pts, single = _check_points(params, y)
    z = (pts[:, None, :] - params.means[None, :, :]) / params.sigmas[None, :, :]
    const = -0.5 * params.dim * _LOG_2PI - params.log_sigmas.sum(axis=1)
    out = const[None, :] - 0.5 * np.sum(z**2, axis=2)
    return out[0] if single else out


def log_component_density(params: GmmParams, k, y):
    """log g(y | mu_k, diag(sigma_k^2)) for one component."""
    k = int(k)
    if not 0 <= k < params.n_components:
        raise IndexError(f"component index {k} out of range")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (params.dim,):
        raise ValueError(f"y must have shape ({params.dim},)")
    z = (y - params.means[k]) / params.sigmas[k]
    return float(-0.5 * params.dim * _LOG_2PI
                 - params.log_sigmas[k].sum()
                 - 0.5 * np.sum(z**2))


def mixture_log_densities(params: GmmParams, y):
    """(N,) vector of log p(y_n | mixture)."""
    pts, single = _check_points(params, y)
    joint = params.log_weights[None, :] + component_log_densities(params, pts)
    out = log_sum_exp(joint, axis=1)
    return float(out[0]) if single else out


def log_mixture_density(params: GmmParams, y):
    """log sum_k w_k g(y | mu_k, sigma_k), via log-sum-exp."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("log_mixture_density expects a single vector")
    return mixture_log_densities(params, y)


def log_likelihood(params: GmmParams, points):
    """Total log-likelihood of a set of representations."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("log_likelihood needs a non-empty (N, D) matrix")
    return float(np.sum(mixture_log_densities(params, pts)))


def responsibilities(params: GmmParams, points):
    """(N, m) posterior probabilities of each component per sample.

    Computed in the log domain and normalized per row; rows sum to 1.
    """
    pts, single = _check_points(params, points)
    joint = params.log_weights[None, :] + component_log_densities(params, pts)
    joint -= log_sum_exp(joint, axis=1)[:, None]
    out = np.exp(joint)
    return out[0] if single else out


@dataclass
class EmFitResult:
    params: GmmParams
    log_likelihood_trace: list[float]
    converged: bool
    n_iter: int


def em_fit(points, m, init: GmmParams, max_iters=200, tol=1e-6,
           rng: SeededRng | None = None) -> EmFitResult:
    """Fit by expectation-maximization from the given initialization.

    Alternates posterior computation with the closed-form weighted updates
    of weights, means and diagonal variances until the log-likelihood
    improves by less than ``tol`` or ``max_iters`` is reached. A component
    that collects (almost) no posterior mass is re-seeded from a random
    sample with the global per-dimension spread.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be a 2-D matrix")
    n = pts.shape[0]
    m = int(m)
    if n < m:
        raise ValueError(f"need at least m={m} samples, got {n}")
    if init.n_components != m or init.dim != pts.shape[1]:
        raise ValueError("init shape does not match requested mixture")
    if rng is None:
        rng = SeededRng(0)

    params = init.copy()
    trace: list[float] = []
    converged = False
    global_sigma = np.maximum(pts.std(axis=0), SIGMA_FLOOR)
    it = 0
    for it in range(1, max_iters + 1):
        joint = params.log_weights[None, :] + component_log_densities(params, pts)
        row_lse = log_sum_exp(joint, axis=1)
        ll = float(np.sum(row_lse))
        trace.append(ll)
        if len(trace) > 1 and abs(ll - trace[-2]) < tol:
            converged = True
            break
        resp = np.exp(joint - row_lse[:, None])

        mass = resp.sum(axis=0)
        degenerate = mass < n * 1e-12
        if np.any(degenerate):
            for k in np.flatnonzero(degenerate):
                warnings.warn(
                    f"re-seeding degenerate mixture component {k}",
                    RuntimeWarning,
                )
                params.means[k] = pts[rng.generator.integers(n)]
                params.log_sigmas[k] = np.log(global_sigma)
            continue  # recompute responsibilities before touching the rest

        weights = mass / n
        params.weight_logits = np.log(weights)
        means = (resp.T @ pts) / mass[:, None]
        log_sigmas = np.empty_like(means)
        for k in range(m):
            var = (resp[:, k, None] * (pts - means[k]) ** 2).sum(axis=0) / mass[k]
            log_sigmas[k] = np.log(np.maximum(np.sqrt(var), SIGMA_FLOOR))
        params = GmmParams(params.weight_logits, means, log_sigmas)

    if not converged and max_iters > 0:
        trace.append(log_likelihood(params, pts))
    return EmFitResult(params, trace, converged, it if max_iters > 0 else 0)


def random_init(points, m, rng: SeededRng) -> GmmParams:
    """Plain random initialization: means drawn from the samples (without
    replacement), global per-dimension spread, uniform weights."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be a 2-D matrix")
    n, dim = pts.shape
    m = int(m)
    if n < m:
        raise ValueError(f"need at least m={m} samples, got {n}")
    picks = rng.generator.choice(n, size=m, replace=False)
    spread = np.maximum(pts.std(axis=0), SIGMA_FLOOR)
    return GmmParams(np.full(m, -np.log(m)), pts[picks],
                     np.tile(np.log(spread), (m, 1)))


def _pairwise_sq_dists(points, centers):
    diff = points[:, None, :] - centers[None, :, :]
    return np.sum(diff**2, axis=2)


def kmeans_init(points, m, rng: SeededRng, max_lloyd_iters=50) -> GmmParams:
    """k-means++ seeding plus Lloyd iterations, converted to mixture parameters.

    Means are the cluster centroids, standard deviations the per-cluster
    per-dimension spread (floored), and weight logits the log cluster
    fractions. An empty cluster is re-seeded from the point farthest from
    its assigned centroid.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be a 2-D matrix")
    n, dim = pts.shape
    m = int(m)
    if n < m:
        raise ValueError(f"need at least m={m} samples, got {n}")

    # k-means++ seeding
    centers = np.empty((m, dim))
    centers[0] = pts[rng.generator.integers(n)]
    d2 = np.sum((pts - centers[0]) ** 2, axis=1)
    for k in range(1, m):
        total = d2.sum()
        if total <= 0:
            idx = rng.generator.integers(n)
        else:
            idx = int(rng.generator.choice(n, p=d2 / total))
        centers[k] = pts[idx]
        d2 = np.minimum(d2, np.sum((pts - centers[k]) ** 2, axis=1))

    labels = np.argmin(_pairwise_sq_dists(pts, centers), axis=1)
    for _ in range(max_lloyd_iters):
        for k in range(m):
            if np.any(labels == k):
                centers[k] = pts[labels == k].mean(axis=0)
        empty = [k for k in range(m) if not np.any(labels == k)]
        if empty:
            dist_own = np.sum((pts - centers[labels]) ** 2, axis=1)
            for k in empty:
                far = int(np.argmax(dist_own))
                centers[k] = pts[far]
                dist_own[far] = -1.0  # one re-seed per point
        new_labels = np.argmin(_pairwise_sq_dists(pts, centers), axis=1)
        if np.array_equal(new_labels, labels) and not empty:
            break
        labels = new_labels

    counts = np.bincount(labels, minlength=m).astype(np.float64)
    counts = np.maximum(counts, 1e-12)
    means = np.empty((m, dim))
    log_sigmas = np.empty((m, dim))
    for k in range(m):
        members = pts[labels == k]
        means[k] = members.mean(axis=0) if len(members) else centers[k]
        spread = members.std(axis=0) if len(members) else np.zeros(dim)
        log_sigmas[k] = np.log(np.maximum(spread, SIGMA_FLOOR))
    return GmmParams(np.log(counts / counts.sum()), means, log_sigmas)
