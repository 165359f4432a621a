"""Dataset ingestion, synthetic benchmark generation, and checkpointing.

The checkpoint container is a custom, documented layout so round-trips are
bit-exact: a magic/version line, one JSON manifest line (sorted keys) naming
every tensor and its shape, then the concatenated little-endian float64
payloads in manifest order.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .autoencoder import DecoderStack, EncoderStack, LayerParams, assert_mirror
from .gmm import GmmParams
from .numerics import SeededRng, check_finite

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

CHECKPOINT_VERSION = 1
_CHECKPOINT_MAGIC = "deepgmm checkpoint v"


@dataclass
class Dataset:
    """Row-major sample matrix with optional integer ground-truth labels."""

    samples: np.ndarray  # (N, d)
    labels: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError("samples must be a 2-D matrix")
        check_finite(self.samples, "samples")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.samples.shape[0],):
                raise ValueError(
                    f"label count {self.labels.shape} does not match "
                    f"{self.samples.shape[0]} samples"
                )
            if self.labels.size and self.labels.min() < 0:
                raise ValueError("labels must be nonnegative")

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]


def _read_be_u32(buf, offset, path):
    if offset + 4 > len(buf):
        raise ValueError(f"{path}: truncated header at byte {offset}")
    return struct.unpack_from(">I", buf, offset)[0]


def load_idx(images_path, labels_path=None) -> Dataset:
    """Load an IDX image file (and optional IDX label file).

    Big-endian magic 0x00000803 for images and 0x00000801 for labels,
    unsigned-byte payloads; pixels are scaled to [0, 1]. Rows are flattened
    images.
    """
    with open(images_path, "rb") as f:
        buf = f.read()
    magic = _read_be_u32(buf, 0, images_path)
    if magic != IDX_IMAGES_MAGIC:
        raise ValueError(
            f"{images_path}: bad magic 0x{magic:08x} at byte 0, "
            f"expected 0x{IDX_IMAGES_MAGIC:08x}"
        )
    count = _read_be_u32(buf, 4, images_path)
    rows = _read_be_u32(buf, 8, images_path)
    cols = _read_be_u32(buf, 12, images_path)
    expected = count * rows * cols
    payload = buf[16:]
    if len(payload) != expected:
        raise ValueError(
            f"{images_path}: truncated payload at byte 16: expected "
            f"{expected} bytes, got {len(payload)}"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    samples = pixels.reshape(count, rows * cols)

    labels = None
    if labels_path is not None:
        with open(labels_path, "rb") as f:
            lbuf = f.read()
        lmagic = _read_be_u32(lbuf, 0, labels_path)
        if lmagic != IDX_LABELS_MAGIC:
            raise ValueError(
                f"{labels_path}: bad magic 0x{lmagic:08x} at byte 0, "
                f"expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        lcount = _read_be_u32(lbuf, 4, labels_path)
        lpayload = lbuf[8:]
        if len(lpayload) != lcount:
            raise ValueError(
                f"{labels_path}: truncated payload at byte 8: expected "
                f"{lcount} bytes, got {len(lpayload)}"
            )
        if lcount != count:
            raise ValueError(
                f"label count {lcount} does not match image count {count}"
            )
        labels = np.frombuffer(lpayload, dtype=np.uint8).astype(np.int64)
    return Dataset(samples, labels, name=str(images_path))


def load_csv(path, has_labels=False, delimiter=",") -> Dataset:
    """Load a rectangular numeric CSV; the last column is the label if asked.

    Values are not rescaled. Malformed input is rejected with the offending
    line number.
    """
    rows = []
    labels = []
    width = None
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(delimiter)
            if width is None:
                width = len(parts)
                if has_labels and width < 2:
                    raise ValueError(
                        f"{path}:{lineno}: need at least 2 columns with labels"
                    )
            elif len(parts) != width:
                raise ValueError(
                    f"{path}:{lineno}: ragged row: {len(parts)} cells, "
                    f"expected {width}"
                )
            try:
                values = [float(v) for v in parts]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric cell") from None
            if has_labels:
                lab = values[-1]
                if not lab.is_integer() or lab < 0:
                    raise ValueError(
                        f"{path}:{lineno}: label must be a nonnegative integer, "
                        f"got {parts[-1]}"
                    )
                labels.append(int(lab))
                values = values[:-1]
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: empty file")
    return Dataset(np.asarray(rows, dtype=np.float64),
                   np.asarray(labels, dtype=np.int64) if has_labels else None,
                   name=str(path))


def _lattice_point(k, dim):
    """k-th point of the axis lattice: origin, then positive multiples of
    the unit axes cycled; any two points are at least 1 apart."""
    if k == 0:
        return np.zeros(dim)
    axis = (k - 1) % dim
    magnitude = (k - 1) // dim + 1
    point = np.zeros(dim)
    point[axis] = float(magnitude)
    return point


def synth_gmm(m, dim, n, separation, rng: SeededRng):
    """Draw a labeled dataset from a known mixture of unit-variance Gaussians.

    Component means sit on an axis lattice scaled by ``separation`` (all
    pairwise distances >= separation), weights are equal. Returns
    (Dataset, GmmParams ground truth); the true component index is the label.
    """
    m, dim, n = int(m), int(dim), int(n)
    if m < 1 or dim < 1 or n < 1:
        raise ValueError("m, dim and n must all be at least 1")
    if separation <= 0:
        raise ValueError("separation must be positive")
    means = np.array([separation * _lattice_point(k, dim) for k in range(m)])
    labels = rng.generator.integers(0, m, size=n)
    samples = means[labels] + rng.generator.normal(size=(n, dim))
    truth = GmmParams(np.full(m, -np.log(m)), means, np.zeros((m, dim)))
    return Dataset(samples, labels.astype(np.int64),
                   name=f"synth-gmm-m{m}-d{dim}"), truth


@dataclass
class Checkpoint:
    """Serializable training state: encoder, optional decoder and mixture."""

    encoder: EncoderStack
    decoder: DecoderStack | None = None
    gmm: GmmParams | None = None
    config: dict = field(default_factory=dict)
    format_version: int = CHECKPOINT_VERSION


def _stack_tensors(prefix, stack):
    tensors = []
    for i, layer in enumerate(stack.layers):
        tensors.append((f"{prefix}.{i}.weight", layer.weight))
        tensors.append((f"{prefix}.{i}.bias", layer.bias))
    return tensors


def save_checkpoint(ckpt: Checkpoint, path):
    """Write the documented checkpoint layout; bit-exact on reload."""
    tensors = _stack_tensors("encoder", ckpt.encoder)
    decoder_meta = None
    if ckpt.decoder is not None:
        tensors += _stack_tensors("decoder", ckpt.decoder)
        decoder_meta = {"activations": [l.activation for l in ckpt.decoder.layers]}
    if ckpt.gmm is not None:
        tensors += [("gmm.weight_logits", ckpt.gmm.weight_logits),
                    ("gmm.means", ckpt.gmm.means),
                    ("gmm.log_sigmas", ckpt.gmm.log_sigmas)]
    manifest = {
        "config": {str(k): str(v) for k, v in ckpt.config.items()},
        "decoder": decoder_meta,
        "encoder": {"activations": [l.activation for l in ckpt.encoder.layers]},
        "gmm": ckpt.gmm is not None,
        "tensors": [[name, list(t.shape)] for name, t in tensors],
    }
    with open(path, "wb") as f:
        f.write(f"{_CHECKPOINT_MAGIC}{ckpt.format_version}\n".encode("ascii"))
        f.write(json.dumps(manifest, sort_keys=True,
                           separators=(",", ":")).encode("ascii"))
        f.write(b"\n")
        for _, t in tensors:
            f.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint, verifying version, manifest and payload length."""
    with open(path, "rb") as f:
        magic_line = f.readline().decode("ascii", errors="replace").rstrip("\n")
        if not magic_line.startswith(_CHECKPOINT_MAGIC):
            raise ValueError(f"{path}: not a checkpoint file")
        version = int(magic_line[len(_CHECKPOINT_MAGIC):])
        if version != CHECKPOINT_VERSION:
            raise ValueError(
                f"{path}: checkpoint format version {version}, "
                f"this build reads version {CHECKPOINT_VERSION}"
            )
        try:
            manifest = json.loads(f.readline().decode("ascii"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ValueError(f"{path}: corrupt manifest: {e}") from None
        payload = f.read()

    specs = manifest["tensors"]
    total = sum(int(np.prod(shape)) for _, shape in specs)
    if len(payload) != 8 * total:
        raise ValueError(
            f"{path}: corrupt payload: expected {8 * total} bytes, "
            f"got {len(payload)}"
        )
    arrays = {}
    offset = 0
    for name, shape in specs:
        size = int(np.prod(shape))
        flat = np.frombuffer(payload, dtype="<f8", count=size,
                             offset=8 * offset)
        arrays[name] = flat.reshape([int(s) for s in shape]).copy()
        offset += size

    def rebuild(prefix, meta, stack_cls):
        layers = []
        for i, act in enumerate(meta["activations"]):
            try:
                layers.append(LayerParams(arrays[f"{prefix}.{i}.weight"],
                                          arrays[f"{prefix}.{i}.bias"], act))
            except KeyError as e:
                raise ValueError(f"{path}: manifest names missing tensor {e}") \
                    from None
        return stack_cls(layers)

    encoder = rebuild("encoder", manifest["encoder"], EncoderStack)
    decoder = None
    if manifest["decoder"] is not None:
        decoder = rebuild("decoder", manifest["decoder"], DecoderStack)
        try:
            assert_mirror(encoder, decoder)
        except ValueError as e:
            raise ValueError(f"{path}: inconsistent header: {e}") from None
    mixture = None
    if manifest["gmm"]:
        try:
            mixture = GmmParams(arrays["gmm.weight_logits"],
                                arrays["gmm.means"], arrays["gmm.log_sigmas"])
        except KeyError as e:
            raise ValueError(f"{path}: manifest names missing tensor {e}") \
                from None
    return Checkpoint(encoder, decoder, mixture, dict(manifest["config"]),
                      version)


def emit_embedding_csv(points, labels, path):
    """Write an N x 2 projection as CSV with 9 significant digits."""
    y = np.asarray(points, dtype=np.float64)
    if y.ndim != 2 or y.shape[1] != 2:
        raise ValueError(f"expected an (N, 2) matrix, got shape {y.shape}")
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (y.shape[0],):
            raise ValueError("label count does not match row count")
    with open(path, "w", encoding="utf-8") as f:
        f.write("x,y,label\n" if labels is not None else "x,y\n")
        for i in range(y.shape[0]):
            row = f"{y[i, 0]:.9g},{y[i, 1]:.9g}"
            if labels is not None:
                row += f",{labels[i]}"
            f.write(row + "\n")
