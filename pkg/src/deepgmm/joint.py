"""Joint gradient-ascent training of the encoder and the Gaussian mixture.

The per-sample objective is the log mixture density of the encoded sample
plus an eta-weighted center-separation term: the sum over components of the
squared distances from each component mean to its nearest neighboring means.
Both parameter blocks are updated by plain gradient ascent; the encoder
receives the objective gradient at the representation chained through
backpropagation.

Parameterization matters for the mixture updates: the weight-logit gradient
(posterior minus weight) and the log-sigma gradient (posterior times the
normalized squared deviation minus one) are the exact derivatives of the log
mixture density with respect to softmax logits and log standard deviations,
which keeps the simplex and positivity constraints automatic. The center
gradient adds, once per optimization step, the separation term's derivative
with respect to the outer index only; neighbor sets are treated as constants
during differentiation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autoencoder import EncoderStack, backprop_encoder, encode
from .gmm import (SIGMA_FLOOR, GmmParams, mixture_log_densities,
                  responsibilities)
from .numerics import SeededRng

NeighborSets = list[list[int]]

SEPARABILITY_MODES = ("per_step", "per_sample")


class NumericalDivergence(RuntimeError):
    """A training step produced non-finite gradients."""


@dataclass
class JointConfig:
    """Hyperparameters of the joint optimization phase."""

    eta: float = 0.01
    neighbor_fraction: float = 0.5
    learning_rate: float = 0.01
    lr_step_factor: float = 0.1
    lr_step_every: int = 40
    batch_size: int = 256
    epochs: int = 60
    seed: int = 0
    separability_mode: str = "per_step"

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if not 0.0 < self.neighbor_fraction <= 1.0:
            raise ValueError("neighbor_fraction must lie in (0, 1]")
        if self.separability_mode not in SEPARABILITY_MODES:
            raise ValueError(f"unknown separability_mode {self.separability_mode!r}")
        if self.lr_step_every < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("invalid schedule, batch size, or epoch count")

    def neighbor_count(self, m):
        """|n(k)|: max(1, floor(fraction * m)), capped at m - 1."""
        if m < 2:
            return 0
        return min(m - 1, max(1, math.floor(self.neighbor_fraction * m)))

    def learning_rate_at(self, epoch):
        """Step-policy rate: base * factor^(epoch // every)."""
        return self.learning_rate * self.lr_step_factor ** (epoch // self.lr_step_every)


def neighbor_sets(params: GmmParams, config: JointConfig) -> NeighborSets:
    """Indices of each component's nearest other components (by mean distance).

    Ties break toward the lower index. With fewer than two components the
    sets are empty and the separation term is defined as zero.
    """
    m = params.n_components
    if m < 2:
        return []
    count = config.neighbor_count(m)
    sets: NeighborSets = []
    for k in range(m):
        d2 = np.sum((params.means - params.means[k]) ** 2, axis=1)
        others = [j for j in range(m) if j != k]
        others.sort(key=lambda j: (d2[j], j))
        sets.append(others[:count])
    return sets


def separability(params: GmmParams, nbrs: NeighborSets):
    """Directed sum of squared center distances over the neighbor sets."""
    total = 0.0
    for k, members in enumerate(nbrs):
        for j in members:
            total += float(np.sum((params.means[k] - params.means[j]) ** 2))
    return total


def objective(params: GmmParams, y, nbrs: NeighborSets, config: JointConfig):
    """Per-sample objective: log mixture density plus eta * separability."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("objective expects a single representation")
    return mixture_log_densities(params, y) + config.eta * separability(params, nbrs)


def batch_objective(params: GmmParams, points, nbrs: NeighborSets,
                    config: JointConfig):
    """Mean per-sample objective over a batch of representations."""
    ll = float(np.mean(mixture_log_densities(params, points)))
    return ll + config.eta * separability(params, nbrs)


def grad_representation(params: GmmParams, y):
    """Gradient of the log mixture density with respect to the representation.

    Per dimension: sum_k p(c_k|y) (mu_kd - y_d) / sigma_kd^2.
    """
    y = np.asarray(y, dtype=np.float64)
    resp = responsibilities(params, y)
    inv_var = np.exp(-2.0 * params.log_sigmas)
    if y.ndim == 1:
        return np.sum(resp[:, None] * (params.means - y) * inv_var, axis=0)
    return np.einsum("nk,nkd->nd", resp,
                     (params.means[None] - y[:, None, :]) * inv_var[None])


def _separation_grad_means(means, nbrs):
    """d(separability)/d(mean_k), differentiating the outer index only."""
    grad = np.zeros_like(means)
    for k, members in enumerate(nbrs):
        for j in members:
            grad[k] += 2.0 * (means[k] - means[j])
    return grad


def grad_means(params: GmmParams, y, nbrs: NeighborSets, config: JointConfig):
    """(m, D) objective gradient for the component means.

    Likelihood part: p(c_k|y) (y_d - mu_kd) / sigma_kd^2. Separation part:
    2 eta sum_{j in n(k)} (mu_kd - mu_jd), with neighbor sets held fixed.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("grad_means expects a single representation")
    resp = responsibilities(params, y)
    inv_var = np.exp(-2.0 * params.log_sigmas)
    grad = resp[:, None] * (y[None, :] - params.means) * inv_var
    if config.eta > 0 and nbrs:
        grad = grad + config.eta * _separation_grad_means(params.means, nbrs)
    return grad


def grad_log_sigmas(params: GmmParams, y):
    """(m, D) gradient of the log mixture density w.r.t. log sigmas.

    Per entry: p(c_k|y) [ (y_d - mu_kd)^2 / sigma_kd^2 - 1 ].
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("grad_log_sigmas expects a single representation")
    resp = responsibilities(params, y)
    z2 = ((y[None, :] - params.means) * np.exp(-params.log_sigmas)) ** 2
    return resp[:, None] * (z2 - 1.0)


def grad_weight_logits(params: GmmParams, y):
    """Gradient of the log mixture density w.r.t. the weight logits:
    p(c_k|y) - w_k."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("grad_weight_logits expects a single representation")
    return responsibilities(params, y) - params.weights


def _batch_mixture_grads(params: GmmParams, points):
    """Batch-mean likelihood gradients for (means, log_sigmas, weight_logits),
    plus the per-sample representation gradients."""
    resp = responsibilities(params, points)
    n = points.shape[0]
    inv_var = np.exp(-2.0 * params.log_sigmas)
    diff = points[:, None, :] - params.means[None, :, :]
    g_rep = np.einsum("nk,nkd->nd", resp, -diff * inv_var[None])
    g_means = np.einsum("nk,nkd->kd", resp, diff) * inv_var / n
    z2 = diff**2 * inv_var[None]
    g_sigmas = (np.einsum("nk,nkd->kd", resp, z2) - resp.sum(axis=0)[:, None]) / n
    g_logits = resp.mean(axis=0) - params.weights
    return g_rep, g_means, g_sigmas, g_logits


def joint_train_step(enc: EncoderStack, params: GmmParams, batch,
                     nbrs: NeighborSets, config: JointConfig,
                     learning_rate=None):
    """One gradient-ascent step on a minibatch; mutates and returns (enc, params).

    Encodes the batch, ascends the encoder along the batch-mean
    representation gradient chained through backpropagation, and ascends the
    mixture parameters along the batch-mean likelihood gradients. The
    separation gradient is applied once per step (mode "per_sample" instead
    scales it by the batch size, matching summed per-sample updates). The
    sigma floor is re-established after the update.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch must be a non-empty (B, d) matrix")
    lr = config.learning_rate if learning_rate is None else learning_rate

    y = encode(enc, x)
    g_rep, g_means, g_sigmas, g_logits = _batch_mixture_grads(params, y)

    if config.eta > 0 and nbrs:
        sep_grad = config.eta * _separation_grad_means(params.means, nbrs)
        if config.separability_mode == "per_sample":
            sep_grad = sep_grad * x.shape[0]
        g_means = g_means + sep_grad

    enc_grads = backprop_encoder(enc, x, g_rep / x.shape[0])

    for g in (g_means, g_sigmas, g_logits, *(dw for dw, _ in enc_grads)):
        if not np.all(np.isfinite(g)):
            raise NumericalDivergence(
                "non-finite gradient in joint training step; "
                "lower the learning rate or eta"
            )

    for layer, (dw, db) in zip(enc.layers, enc_grads):
        layer.weight += lr * dw
        layer.bias += lr * db
    params.weight_logits = params.weight_logits + lr * g_logits
    params.means = params.means + lr * g_means
    params.log_sigmas = np.maximum(params.log_sigmas + lr * g_sigmas,
                                   np.log(SIGMA_FLOOR))
    return enc, params


def train(enc: EncoderStack, params: GmmParams, data, config: JointConfig,
          start_epoch=0, epoch_callback=None):
    """Run the joint optimization for config.epochs epochs.

    Neighbor sets are recomputed at every epoch start and frozen within the
    epoch; minibatch order is drawn from a per-epoch stream of config.seed so
    a run resumed at ``start_epoch`` reproduces an uninterrupted one. The
    returned history holds one record per epoch plus a leading baseline row
    (epoch = start_epoch, metrics of the untouched models); zero epochs
    yield unchanged models and an empty history. Inputs are copied, never
    mutated.

    History records: epoch, mean_objective, mean_loglik, separability,
    learning_rate. With eta = 0 the separation machinery is disabled and its
    column reports 0.
    """
    x = np.asarray(getattr(data, "samples", data), dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training data must be a non-empty sample matrix")
    enc = enc.copy()
    params = params.copy()
    if config.epochs <= start_epoch:
        return enc, params, []

    rng = SeededRng(config.seed)
    use_sep = config.eta > 0 and params.n_components >= 2

    def record(epoch, lr):
        ll = float(np.mean(mixture_log_densities(params, encode(enc, x))))
        sep = separability(params, neighbor_sets(params, config)) if use_sep else 0.0
        return {
            "epoch": epoch,
            "mean_objective": ll + config.eta * sep,
            "mean_loglik": ll,
            "separability": sep,
            "learning_rate": lr,
        }

    history = [record(start_epoch, config.learning_rate_at(start_epoch))]
    n = x.shape[0]
    for epoch in range(start_epoch, config.epochs):
        lr = config.learning_rate_at(epoch)
        nbrs = neighbor_sets(params, config) if use_sep else []
        order = rng.child(epoch).generator.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = x[order[start: start + config.batch_size]]
            joint_train_step(enc, params, batch, nbrs, config, learning_rate=lr)
        history.append(record(epoch + 1, lr))
        if epoch_callback is not None:
            epoch_callback(epoch + 1, enc, params)
    return enc, params, history


def assign(enc: EncoderStack, params: GmmParams, data):
    """Hard cluster labels: argmax posterior of the encoded samples.

    Ties break toward the lower component index.
    """
    x = np.asarray(getattr(data, "samples", data), dtype=np.float64)
    resp = responsibilities(params, encode(enc, x))
    return np.argmax(resp, axis=1)
