"""Compact image descriptors.

A sonar image is bilinearly resized to a fixed input size, pushed through
a small stack of strided convolutions with ReLU, flattened, projected to
128 dimensions by a frozen random Gaussian matrix, and L2-normalized.
Only the convolution weights are trainable; the projection is fixed by
its seed, so descriptors are fully determined by (image, encoder seed or
trained weights, projection seed).
"""

from __future__ import annotations

import math
import os
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import (
    DESCRIPTOR_DIM,
    Descriptor,
    FormatError,
    SonarImage,
    ValidationError,
    derive_rng,
)

WEIGHTS_MAGIC = b"SENC"
DB_MAGIC = b"SDPR"
FORMAT_VERSION = 1

_U64 = (1 << 64) - 1


class DegenerateDescriptorWarning(UserWarning):
    """An image projected to the zero vector; the fallback basis vector was used."""


@dataclass(frozen=True)
class EncoderParams:
    """Architecture of the convolutional encoder.

    Every stage is a kernel x kernel convolution with stride
    ``stride_per_stage`` and zero padding kernel // 2, followed by ReLU,
    so each stage maps an H x W map to ceil(H / stride) x ceil(W / stride).
    """

    input_h: int = 256
    input_w: int = 200
    channel_widths: tuple[int, ...] = (8, 16, 32)
    kernel: int = 3
    stride_per_stage: int = 2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channel_widths", tuple(int(c) for c in self.channel_widths))
        if self.input_h < 2 or self.input_w < 2:
            raise ValidationError(f"input size must be at least 2x2, got {self.input_h}x{self.input_w}")
        if not self.channel_widths or any(c < 1 for c in self.channel_widths):
            raise ValidationError(f"channel_widths must be non-empty positive, got {self.channel_widths}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValidationError(f"kernel must be odd and positive, got {self.kernel}")
        if self.stride_per_stage < 1:
            raise ValidationError(f"stride_per_stage must be positive, got {self.stride_per_stage}")

    @property
    def n_stages(self) -> int:
        return len(self.channel_widths)

    def stage_shapes(self) -> list[tuple[int, int, int]]:
        """(channels, height, width) after each stage."""
        h, w = self.input_h, self.input_w
        shapes = []
        for c in self.channel_widths:
            h = -(-h // self.stride_per_stage)
            w = -(-w // self.stride_per_stage)
            shapes.append((c, h, w))
        return shapes

    @property
    def feature_length(self) -> int:
        c, h, w = self.stage_shapes()[-1]
        return c * h * w


@dataclass
class EncoderWeights:
    """Trainable per-stage kernels (out, in, k, k) and biases (out,).

    Arrays are mutable on purpose: the training loop updates them in
    place. ``params`` records the architecture and the init seed.
    """

    params: EncoderParams
    kernels: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        expected_in = 1
        if len(self.kernels) != self.params.n_stages or len(self.biases) != self.params.n_stages:
            raise ValidationError("stage count mismatch between params and weight arrays")
        k = self.params.kernel
        for s, (kern, bias, out_c) in enumerate(zip(self.kernels, self.biases, self.params.channel_widths)):
            if kern.shape != (out_c, expected_in, k, k):
                raise ValidationError(
                    f"stage {s} kernel shape {kern.shape} != {(out_c, expected_in, k, k)}"
                )
            if bias.shape != (out_c,):
                raise ValidationError(f"stage {s} bias shape {bias.shape} != ({out_c},)")
            if not (np.isfinite(kern).all() and np.isfinite(bias).all()):
                raise ValidationError(f"stage {s} weights contain non-finite values")
            expected_in = out_c

    def copy(self) -> "EncoderWeights":
        return EncoderWeights(
            self.params,
            tuple(k.copy() for k in self.kernels),
            tuple(b.copy() for b in self.biases),
        )

    @property
    def n_parameters(self) -> int:
        return sum(k.size for k in self.kernels) + sum(b.size for b in self.biases)


def init_encoder(params: EncoderParams) -> EncoderWeights:
    """He-initialized weights: kernels ~ N(0, 2 / fan_in), biases zero."""
    rng = derive_rng(params.seed)
    k = params.kernel
    kernels, biases = [], []
    in_c = 1
    for out_c in params.channel_widths:
        std = math.sqrt(2.0 / (in_c * k * k))
        kernels.append(rng.normal(0.0, std, size=(out_c, in_c, k, k)))
        biases.append(np.zeros(out_c, dtype=np.float64))
        in_c = out_c
    return EncoderWeights(params, tuple(kernels), tuple(biases))


# ---------------------------------------------------------------------------
# Resize and forward pass
# ---------------------------------------------------------------------------


def resize_array(x: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinear resize with endpoint alignment (corners map to corners)."""
    src_h, src_w = x.shape
    if src_h < 2 or src_w < 2 or h < 1 or w < 1:
        raise ValidationError(f"cannot resize {x.shape} to {(h, w)}")
    rows = np.linspace(0.0, src_h - 1.0, h)
    cols = np.linspace(0.0, src_w - 1.0, w)
    r0 = np.minimum(np.floor(rows).astype(int), src_h - 2)
    c0 = np.minimum(np.floor(cols).astype(int), src_w - 2)
    rf = (rows - r0)[:, None]
    cf = (cols - c0)[None, :]
    top = x[r0][:, c0] * (1.0 - cf) + x[r0][:, c0 + 1] * cf
    bottom = x[r0 + 1][:, c0] * (1.0 - cf) + x[r0 + 1][:, c0 + 1] * cf
    return np.clip(top * (1.0 - rf) + bottom * rf, 0.0, 1.0)


def resize_image(image: SonarImage, h: int = 256, w: int = 200) -> np.ndarray:
    """Resize a sonar image (beams x bins) to an h x w float array in [0,1]."""
    return resize_array(image.data, h, w)


def conv_stage_forward(
    x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, stride: int
) -> tuple[np.ndarray, np.ndarray]:
    """One strided convolution stage; returns pre-activation and the window view.

    x is (C_in, H, W); output is (C_out, ceil(H/stride), ceil(W/stride)).
    The returned window view (C_in, oh, ow, k, k) references the padded
    input and is what the backward pass contracts against.
    """
    k = kernel.shape[-1]
    pad = k // 2
    c_in, h, w = x.shape
    x_pad = np.zeros((c_in, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    x_pad[:, pad : pad + h, pad : pad + w] = x
    windows = sliding_window_view(x_pad, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    z = np.tensordot(kernel, windows, axes=([1, 2, 3], [0, 3, 4]))
    z += bias[:, None, None]
    return z, windows


def encoder_forward(
    x01: np.ndarray, weights: EncoderWeights, keep_cache: bool = False
) -> tuple[np.ndarray, list]:
    """Run the conv stack on a resized image (input_h x input_w, in [0,1]).

    Returns (features, cache). features is the flat (channel, row, column)
    vector after the last ReLU. With keep_cache, cache holds per-stage
    (window view, pre-activation) pairs for backpropagation.
    """
    params = weights.params
    if x01.shape != (params.input_h, params.input_w):
        raise ValidationError(
            f"encoder expects {(params.input_h, params.input_w)}, got {x01.shape}"
        )
    a = x01[None, :, :]
    cache = []
    for kern, bias in zip(weights.kernels, weights.biases):
        z, windows = conv_stage_forward(a, kern, bias, params.stride_per_stage)
        if keep_cache:
            cache.append((windows, z))
        a = np.maximum(z, 0.0)
    return a.reshape(-1), cache


def extract_features(x01: np.ndarray, weights: EncoderWeights) -> np.ndarray:
    """Flattened encoder output for a resized image."""
    features, _ = encoder_forward(x01, weights)
    return features


# ---------------------------------------------------------------------------
# Random Gaussian projection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RgpMatrix:
    """Frozen 128 x cols projection, entries i.i.d. N(0, 1/128) from seed."""

    seed: int
    cols: int
    entries: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.cols < 1:
            raise ValidationError(f"cols must be positive, got {self.cols}")
        rng = derive_rng(self.seed)
        entries = rng.normal(0.0, math.sqrt(1.0 / DESCRIPTOR_DIM), size=(DESCRIPTOR_DIM, self.cols))
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def rows(self) -> int:
        return DESCRIPTOR_DIM


def rgp_project(features: np.ndarray, matrix: RgpMatrix) -> np.ndarray:
    """Project a feature vector to 128 dimensions."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (matrix.cols,):
        raise ValidationError(f"feature length {features.shape} != matrix cols ({matrix.cols},)")
    return matrix.entries @ features


def describe_array(x01: np.ndarray, weights: EncoderWeights, matrix: RgpMatrix) -> Descriptor:
    """Descriptor of an already-resized image (skips the resize step)."""
    features = extract_features(x01, weights)
    projected = rgp_project(features, matrix)
    norm = float(np.linalg.norm(projected))
    if norm == 0.0:
        warnings.warn(
            "projection is the zero vector; using the first-basis fallback",
            DegenerateDescriptorWarning,
            stacklevel=2,
        )
        fallback = np.zeros(DESCRIPTOR_DIM, dtype=np.float64)
        fallback[0] = 1.0
        return Descriptor(fallback)
    return Descriptor(projected / norm)


def describe(image: SonarImage, weights: EncoderWeights, matrix: RgpMatrix) -> Descriptor:
    """Full descriptor pipeline: resize, encode, project, normalize."""
    x01 = resize_image(image, weights.params.input_h, weights.params.input_w)
    return describe_array(x01, weights, matrix)


def cosine_distance(a: Descriptor, b: Descriptor) -> float:
    """1 - cos similarity for unit vectors; clamped to [0, 2]."""
    d = 1.0 - float(np.dot(a.values, b.values))
    return min(max(d, 0.0), 2.0)


# ---------------------------------------------------------------------------
# Weights file (magic "SENC", little-endian, f64 arrays)
# ---------------------------------------------------------------------------


def save_weights(weights: EncoderWeights, path: str | os.PathLike) -> None:
    """Write encoder weights: shape header then per-stage kernel and bias."""
    p = weights.params
    header = struct.pack(
        "<4sIQIIIII",
        WEIGHTS_MAGIC,
        FORMAT_VERSION,
        p.seed & _U64,
        p.input_h,
        p.input_w,
        p.kernel,
        p.stride_per_stage,
        p.n_stages,
    )
    chunks = [header]
    in_c = 1
    for kern, bias, out_c in zip(weights.kernels, weights.biases, p.channel_widths):
        chunks.append(struct.pack("<II", out_c, in_c))
        chunks.append(np.ascontiguousarray(kern, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(bias, dtype="<f8").tobytes())
        in_c = out_c
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_weights(path: str | os.PathLike) -> EncoderWeights:
    with open(path, "rb") as fh:
        blob = fh.read()
    head_fmt = "<4sIQIIIII"
    head_size = struct.calcsize(head_fmt)
    if len(blob) < head_size:
        raise FormatError("weights file shorter than header", byte_offset=len(blob))
    magic, version, seed, input_h, input_w, kernel, stride, n_stages = struct.unpack_from(head_fmt, blob)
    if magic != WEIGHTS_MAGIC:
        raise FormatError(f"bad weights magic {magic!r}", byte_offset=0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported weights version {version}", byte_offset=4)
    offset = head_size
    widths, kernels, biases = [], [], []
    for s in range(n_stages):
        if offset + 8 > len(blob):
            raise FormatError(f"truncated stage {s} header", byte_offset=offset)
        out_c, in_c = struct.unpack_from("<II", blob, offset)
        offset += 8
        k_bytes = out_c * in_c * kernel * kernel * 8
        b_bytes = out_c * 8
        if offset + k_bytes + b_bytes > len(blob):
            raise FormatError(f"truncated stage {s} arrays", byte_offset=offset)
        kern = np.frombuffer(blob, dtype="<f8", count=out_c * in_c * kernel * kernel, offset=offset)
        kernels.append(kern.reshape(out_c, in_c, kernel, kernel).astype(np.float64))
        offset += k_bytes
        biases.append(np.frombuffer(blob, dtype="<f8", count=out_c, offset=offset).astype(np.float64))
        offset += b_bytes
        widths.append(out_c)
    seed_signed = seed - (1 << 64) if seed >= (1 << 63) else seed
    params = EncoderParams(
        input_h=input_h,
        input_w=input_w,
        channel_widths=tuple(widths),
        kernel=kernel,
        stride_per_stage=stride,
        seed=seed_signed,
    )
    return EncoderWeights(params, tuple(kernels), tuple(biases))


# ---------------------------------------------------------------------------
# Descriptor database (magic "SDPR", little-endian)
# ---------------------------------------------------------------------------


def save_descriptor_db(
    path: str | os.PathLike,
    ids: list[int],
    descriptors: list[Descriptor],
    rgp_seed: int,
    encoder_seed: int,
) -> None:
    """Write {id, 128 x f32} records under a fixed header."""
    if len(ids) != len(descriptors):
        raise ValidationError("ids and descriptors length mismatch")
    chunks = [
        struct.pack(
            "<4sIIIQQ",
            DB_MAGIC,
            FORMAT_VERSION,
            len(ids),
            DESCRIPTOR_DIM,
            rgp_seed & _U64,
            encoder_seed & _U64,
        )
    ]
    for rid, desc in zip(ids, descriptors):
        chunks.append(struct.pack("<I", rid))
        chunks.append(desc.values.astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_descriptor_db(path: str | os.PathLike) -> tuple[list[int], np.ndarray, int, int]:
    """Read a descriptor database: (ids, (n, 128) float64 unit rows, rgp_seed, encoder_seed).

    Rows are renormalized after the f32 round-trip so they are exactly
    unit-norm in f64.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    head_fmt = "<4sIIIQQ"
    head_size = struct.calcsize(head_fmt)
    if len(blob) < head_size:
        raise FormatError("descriptor db shorter than header", byte_offset=len(blob))
    magic, version, count, dim, rgp_seed, encoder_seed = struct.unpack_from(head_fmt, blob)
    if magic != DB_MAGIC:
        raise FormatError(f"bad descriptor db magic {magic!r}", byte_offset=0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported descriptor db version {version}", byte_offset=4)
    if dim != DESCRIPTOR_DIM:
        raise FormatError(f"descriptor dim {dim} != {DESCRIPTOR_DIM}", byte_offset=12)
    record_size = 4 + dim * 4
    if len(blob) != head_size + count * record_size:
        raise FormatError(
            f"descriptor db size {len(blob)} != header + {count} records",
            byte_offset=len(blob),
        )
    ids: list[int] = []
    vectors = np.empty((count, dim), dtype=np.float64)
    offset = head_size
    for i in range(count):
        (rid,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset).astype(np.float64)
        offset += dim * 4
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise FormatError(f"zero-norm descriptor for id {rid}", byte_offset=offset - dim * 4)
        ids.append(rid)
        vectors[i] = vec / norm
    return ids, vectors, rgp_seed, encoder_seed
