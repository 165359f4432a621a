"""Stacked denoising autoencoder with hand-rolled backpropagation.

Fully connected layers only. The encoder ends in a linear layer (the
representation may be negative), the decoder mirrors the encoder and ends in
a linear reconstruction layer; every other layer is ReLU. Training is plain
minibatch SGD on the squared reconstruction error, with masking corruption
applied to inputs during greedy layerwise pretraining and clean inputs
during whole-stack fine-tuning.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import SeededRng, check_finite

ACTIVATIONS = ("relu", "linear")


@dataclass
class LayerParams:
    """One fully connected layer: out = act(weight @ x + bias)."""

    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("layer weight must be 2-D and bias 1-D")
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ValueError(
                f"bias length {self.bias.shape[0]} does not match "
                f"weight rows {self.weight.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        check_finite(self.weight, "layer weight")
        check_finite(self.bias, "layer bias")

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]

    def copy(self):
        return LayerParams(self.weight.copy(), self.bias.copy(), self.activation)


def _validate_chain(layers, final_activation, name):
    if not layers:
        raise ValueError(f"{name} needs at least one layer")
    for a, b in zip(layers, layers[1:]):
        if a.out_dim != b.in_dim:
            raise ValueError(
                f"{name} layer dimensions do not chain: "
                f"{a.out_dim} -> {b.in_dim}"
            )
    if layers[-1].activation != final_activation:
        raise ValueError(f"{name} final layer must be {final_activation}")
    for layer in layers[:-1]:
        if layer.activation != "relu":
            raise ValueError(f"{name} hidden layers must be relu")


@dataclass
class EncoderStack:
    layers: list[LayerParams] = field(default_factory=list)

    def __post_init__(self):
        _validate_chain(self.layers, "linear", "encoder")

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    def copy(self):
        return EncoderStack([l.copy() for l in self.layers])


@dataclass
class DecoderStack:
    layers: list[LayerParams] = field(default_factory=list)

    def __post_init__(self):
        _validate_chain(self.layers, "linear", "decoder")

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    def copy(self):
        return DecoderStack([l.copy() for l in self.layers])


def assert_mirror(enc: EncoderStack, dec: DecoderStack):
    """Check that the decoder reverses the encoder's dimension chain."""
    enc_dims = [enc.layers[0].in_dim] + [l.out_dim for l in enc.layers]
    dec_dims = [dec.layers[0].in_dim] + [l.out_dim for l in dec.layers]
    if dec_dims != enc_dims[::-1]:
        raise ValueError(
            f"decoder dims {dec_dims} do not mirror encoder dims {enc_dims}"
        )


@dataclass
class CorruptionSpec:
    """Masking noise: a fixed fraction of coordinates is zeroed per sample."""

    mask_fraction: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise ValueError("mask_fraction must lie in [0, 1]")


@dataclass
class TrainConfig:
    """SGD hyperparameters for the autoencoder phases."""

    learning_rate: float = 0.01
    epochs: int = 15
    batch_size: int = 256

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


def corrupt(x, spec: CorruptionSpec, rng: SeededRng):
    """Zero exactly round(mask_fraction * dim) coordinates per sample.

    Masked positions are drawn uniformly without replacement. Accepts a
    single sample vector or a (batch, dim) matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    dim = rows.shape[1]
    n_masked = int(round(spec.mask_fraction * dim))
    if n_masked == 0:
        out = rows.copy()
    elif n_masked >= dim:
        out = np.zeros_like(rows)
    else:
        u = rng.generator.random(rows.shape)
        # rank of each entry within its row; the n_masked smallest get zeroed
        ranks = np.argsort(np.argsort(u, axis=1), axis=1)
        out = np.where(ranks < n_masked, 0.0, rows)
    return out[0] if single else out


def _forward(layers, x):
    """Activations per layer: [input, a1, ..., aL]. x is (batch, in_dim)."""
    acts = [x]
    a = x
    for layer in layers:
        z = a @ layer.weight.T + layer.bias
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        acts.append(a)
    return acts


def _backward(layers, acts, grad_out):
    """Backpropagate d(scalar)/d(output) through the layers.

    Returns ([(dW, db) per layer], d(scalar)/d(input)). Contributions are
    summed over batch rows in index order; scale grad_out beforehand for
    mean semantics. ReLU subgradient at 0 is taken as 0.
    """
    grads = [None] * len(layers)
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        if layer.activation == "relu":
            g = g * (acts[i + 1] > 0)
        grads[i] = (g.T @ acts[i], g.sum(axis=0))
        g = g @ layer.weight
    return grads, g


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def encode(stack: EncoderStack, x):
    """Forward pass through the encoder. Accepts a vector or a batch matrix."""
    batch, single = _as_batch(x)
    if batch.shape[1] != stack.input_dim:
        raise ValueError(
            f"input dim {batch.shape[1]} does not match encoder input "
            f"{stack.input_dim}"
        )
    out = _forward(stack.layers, batch)[-1]
    return out[0] if single else out


def decode(stack: DecoderStack, y):
    """Forward pass through the decoder. Accepts a vector or a batch matrix."""
    batch, single = _as_batch(y)
    if batch.shape[1] != stack.input_dim:
        raise ValueError(
            f"input dim {batch.shape[1]} does not match decoder input "
            f"{stack.input_dim}"
        )
    out = _forward(stack.layers, batch)[-1]
    return out[0] if single else out


def reconstruction_loss(x, z):
    """Squared distance sum_d (x_d - z_d)^2 between sample and reconstruction."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {z.shape}")
    return float(np.sum((x - z) ** 2))


def backprop_autoencoder(enc: EncoderStack, dec: DecoderStack, x_clean, x_corrupt):
    """Exact gradients of the reconstruction loss for every layer parameter.

    Forward-propagates x_corrupt through encoder and decoder, measures the
    squared distance to x_clean, and backpropagates. For batch inputs the
    returned gradients are the mean of the per-sample gradients.

    Returns (encoder_grads, decoder_grads) as lists of (dW, db).
    """
    clean, _ = _as_batch(x_clean)
    corrupt_in, _ = _as_batch(x_corrupt)
    if clean.shape != corrupt_in.shape:
        raise ValueError("clean and corrupted inputs must have equal shapes")
    layers = list(enc.layers) + list(dec.layers)
    acts = _forward(layers, corrupt_in)
    batch = clean.shape[0]
    grad_out = 2.0 * (acts[-1] - clean) / batch
    grads, _ = _backward(layers, acts, grad_out)
    return grads[: len(enc.layers)], grads[len(enc.layers):]


def backprop_encoder(enc: EncoderStack, x, grad_representation):
    """Chain an upstream gradient at the representation back to encoder params.

    grad_representation is d(scalar)/d(encoding) per batch row; rows are
    summed, so pre-scale it for mean semantics. Returns a list of (dW, db).
    """
    batch, _ = _as_batch(x)
    acts = _forward(enc.layers, batch)
    upstream, _ = _as_batch(grad_representation)
    grads, _ = _backward(enc.layers, acts, upstream)
    return grads


def glorot_layer(in_dim, out_dim, activation, rng: SeededRng):
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases."""
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    weight = rng.generator.uniform(-limit, limit, size=(out_dim, in_dim))
    return LayerParams(weight, np.zeros(out_dim), activation)


def mean_reconstruction_loss(enc: EncoderStack, dec: DecoderStack, samples):
    """Mean clean-input squared reconstruction error over the dataset."""
    x = np.asarray(samples, dtype=np.float64)
    z = decode(dec, encode(enc, x))
    return float(np.mean(np.sum((x - z) ** 2, axis=1)))


def _sgd_epoch(layers, inputs, targets, lr, batch_size, order):
    """One pass of minibatch SGD; returns mean per-sample loss while training."""
    total = 0.0
    n = inputs.shape[0]
    for start in range(0, n, batch_size):
        idx = order[start: start + batch_size]
        xb, tb = inputs[idx], targets[idx]
        acts = _forward(layers, xb)
        diff = acts[-1] - tb
        total += float(np.sum(diff**2))
        grads, _ = _backward(layers, acts, 2.0 * diff / len(idx))
        for layer, (dw, db) in zip(layers, grads):
            layer.weight -= lr * dw
            layer.bias -= lr * db
    return total / n


def _samples_of(data):
    x = np.asarray(getattr(data, "samples", data), dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training data must be a non-empty sample matrix")
    return x


def pretrain_layerwise(data, shape, spec: CorruptionSpec, config: TrainConfig,
                       rng: SeededRng):
    """Greedy layerwise pretraining of the denoising autoencoder.

    ``shape`` lists layer sizes starting with the input dimension, e.g.
    (784, 500, 500, 2000, 10). Each stage trains a one-layer denoising
    autoencoder on the clean activations of the previously trained stages:
    inputs are corrupted, targets are the clean activations. Returns
    (EncoderStack, DecoderStack, losses) where losses is a list of
    {"stage", "epoch", "loss"} records.
    """
    x = _samples_of(data)
    shape = [int(s) for s in shape]
    if len(shape) < 2 or any(s < 1 for s in shape):
        raise ValueError(f"invalid stack shape {shape}")
    if shape[0] != x.shape[1]:
        raise ValueError(
            f"shape[0]={shape[0]} does not match data dimension {x.shape[1]}"
        )

    n_stages = len(shape) - 1
    enc_layers, dec_layers = [], []
    losses = []
    h = x
    for stage in range(1, n_stages + 1):
        enc_act = "linear" if stage == n_stages else "relu"
        dec_act = "linear" if stage == 1 else "relu"
        enc_layer = glorot_layer(shape[stage - 1], shape[stage], enc_act, rng)
        dec_layer = glorot_layer(shape[stage], shape[stage - 1], dec_act, rng)
        pair = [enc_layer, dec_layer]
        for epoch in range(config.epochs):
            order = rng.generator.permutation(h.shape[0])
            corrupted = corrupt(h, spec, rng)
            loss = _sgd_epoch(pair, corrupted, h, config.learning_rate,
                              config.batch_size, order)
            losses.append({"stage": stage, "epoch": epoch + 1, "loss": loss})
        enc_layers.append(enc_layer)
        dec_layers.append(dec_layer)
        h = _forward([enc_layer], h)[-1]

    return EncoderStack(enc_layers), DecoderStack(dec_layers[::-1]), losses


def finetune(enc: EncoderStack, dec: DecoderStack, data, config: TrainConfig,
             rng: SeededRng):
    """Fine-tune the concatenated stack end-to-end on clean inputs.

    No corruption is applied. Returns (EncoderStack, DecoderStack, losses)
    with one mean-loss entry per epoch; the input stacks are not mutated.
    """
    x = _samples_of(data)
    assert_mirror(enc, dec)
    enc = enc.copy()
    dec = dec.copy()
    layers = list(enc.layers) + list(dec.layers)
    losses = []
    for _ in range(config.epochs):
        order = rng.generator.permutation(x.shape[0])
        losses.append(_sgd_epoch(layers, x, x, config.learning_rate,
                                 config.batch_size, order))
    return enc, dec, losses
