"""Three-stage sonar image enhancement.

The chain is: insonification normalization (divide by the dataset-average
intensity pattern), multi-level Haar wavelet denoising with soft
thresholding, and per-beam SOCA/GOCA-CFAR binarization. Each stage is a
pure function from SonarImage to SonarImage; the composition is
``enhance_pipeline``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import SonarConfig, SonarImage, ValidationError

CFAR_MODES = ("soca", "goca")

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class CfarParams:
    """Per-beam CFAR configuration.

    ``n_w`` is the number of cells in each of the leading and trailing
    averaging windows, ``guard`` the number of guard cells between the cell
    under test and each window. The window must fit in a beam:
    2 * (n_w + guard) + 1 <= n_bins, checked against the image at call time.
    """

    mode: str = "soca"
    n_w: int = 40
    p_fa: float = 0.1
    guard: int = 2

    def __post_init__(self):
        object.__setattr__(self, "mode", self.mode.lower())
        if self.mode not in CFAR_MODES:
            raise ValidationError(f"CFAR mode must be one of {CFAR_MODES}, got {self.mode!r}")
        if self.n_w < 1:
            raise ValidationError(f"n_w must be positive, got {self.n_w}")
        if not (0.0 < self.p_fa < 1.0):
            raise ValidationError(f"p_fa must be in (0, 1), got {self.p_fa}")
        if self.guard < 0:
            raise ValidationError(f"guard must be non-negative, got {self.guard}")

    @property
    def alpha(self) -> float:
        """Cell-averaging CFAR scale factor under exponential clutter."""
        return self.n_w * (self.p_fa ** (-1.0 / self.n_w) - 1.0)


@dataclass(frozen=True)
class DwtParams:
    """Wavelet denoising configuration (Haar, soft thresholding)."""

    levels: int = 2
    threshold_rule: str = "soft"
    threshold_scale: float = 1.0

    def __post_init__(self):
        if self.levels < 1:
            raise ValidationError(f"levels must be positive, got {self.levels}")
        if self.threshold_rule != "soft":
            raise ValidationError(f"only 'soft' thresholding is supported, got {self.threshold_rule!r}")
        if not (math.isfinite(self.threshold_scale) and self.threshold_scale >= 0.0):
            raise ValidationError(f"threshold_scale must be non-negative, got {self.threshold_scale}")


def _check_same_config(images: Sequence[SonarImage]) -> SonarConfig:
    config = images[0].config
    for img in images[1:]:
        if img.config != config:
            raise ValidationError("all images must share one SonarConfig")
    return config


def insonification_pattern(images: Iterable[SonarImage]) -> SonarImage:
    """Per-cell arithmetic mean of a set of images sharing one config.

    Each cell's values are sorted before summation, which makes the result
    exactly invariant under permutations of the input list (the reduction
    order becomes a function of the value multiset alone).
    """
    images = list(images)
    if not images:
        raise ValidationError("insonification_pattern requires a non-empty image list")
    config = _check_same_config(images)
    stack = np.stack([img.data for img in images], axis=0)
    stack.sort(axis=0)
    mean = stack.sum(axis=0) / len(images)
    return SonarImage(config, np.clip(mean, 0.0, 1.0))


def normalize_insonification(
    image: SonarImage, pattern: SonarImage, epsilon: float = 1e-3
) -> SonarImage:
    """Divide out the insonification pattern, rescaled by its mean.

    out[b][r] = clamp(image[b][r] * mean(pattern) / max(pattern[b][r], epsilon), 0, 1)

    Cells where the pattern is at or below ``epsilon`` are scaled by
    mean(pattern) / epsilon and clamped.
    """
    if image.config != pattern.config:
        raise ValidationError("image and pattern configs do not match")
    if not epsilon > 0.0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    gain = float(pattern.data.mean())
    out = image.data * gain / np.maximum(pattern.data, epsilon)
    return SonarImage(image.config, np.clip(out, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Haar DWT denoising
# ---------------------------------------------------------------------------


def _haar_forward_2d(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One separable 2-D Haar analysis step on an even-sized array."""
    lo_r = (x[0::2, :] + x[1::2, :]) / _SQRT2
    hi_r = (x[0::2, :] - x[1::2, :]) / _SQRT2
    ll = (lo_r[:, 0::2] + lo_r[:, 1::2]) / _SQRT2
    lh = (lo_r[:, 0::2] - lo_r[:, 1::2]) / _SQRT2
    hl = (hi_r[:, 0::2] + hi_r[:, 1::2]) / _SQRT2
    hh = (hi_r[:, 0::2] - hi_r[:, 1::2]) / _SQRT2
    return ll, lh, hl, hh


def _haar_inverse_2d(ll: np.ndarray, lh: np.ndarray, hl: np.ndarray, hh: np.ndarray) -> np.ndarray:
    """Inverse of :func:`_haar_forward_2d`."""
    h, w = ll.shape
    lo_r = np.empty((h, 2 * w), dtype=np.float64)
    hi_r = np.empty((h, 2 * w), dtype=np.float64)
    lo_r[:, 0::2] = (ll + lh) / _SQRT2
    lo_r[:, 1::2] = (ll - lh) / _SQRT2
    hi_r[:, 0::2] = (hl + hh) / _SQRT2
    hi_r[:, 1::2] = (hl - hh) / _SQRT2
    x = np.empty((2 * h, 2 * w), dtype=np.float64)
    x[0::2, :] = (lo_r + hi_r) / _SQRT2
    x[1::2, :] = (lo_r - hi_r) / _SQRT2
    return x


def _pad_even(x: np.ndarray) -> np.ndarray:
    """Symmetric-extend the last row/column so both dimensions are even."""
    pad_r = x.shape[0] % 2
    pad_c = x.shape[1] % 2
    if pad_r or pad_c:
        x = np.pad(x, ((0, pad_r), (0, pad_c)), mode="symmetric")
    return x


def _soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def dwt_denoise(image: SonarImage, params: DwtParams) -> SonarImage:
    """Multi-level 2-D Haar denoising with a universal soft threshold.

    The threshold is T = threshold_scale * sigma * sqrt(2 * ln(n)) with
    sigma estimated as median(|finest diagonal detail|) / 0.6745 and n the
    total pixel count. All detail subbands at every level are soft
    thresholded; the result is reconstructed, cropped back to the input
    size, and clamped to [0, 1].
    """
    config = image.config
    max_levels = int(math.floor(math.log2(min(config.n_beams, config.n_bins))))
    if params.levels > max_levels:
        raise ValidationError(
            f"levels={params.levels} exceeds floor(log2(min(beams, bins)))={max_levels}"
        )
    x = image.data.astype(np.float64)
    shapes: list[tuple[int, int]] = []
    details: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    for _ in range(params.levels):
        shapes.append(x.shape)
        x = _pad_even(x)
        x, lh, hl, hh = _haar_forward_2d(x)
        details.append((lh, hl, hh))

    # noise scale from the finest diagonal subband (universal threshold)
    finest_hh = details[0][2]
    sigma = float(np.median(np.abs(finest_hh))) / 0.6745
    n = config.n_beams * config.n_bins
    threshold = params.threshold_scale * sigma * math.sqrt(2.0 * math.log(n))

    for level in range(params.levels - 1, -1, -1):
        lh, hl, hh = details[level]
        if threshold > 0.0:
            lh = _soft_threshold(lh, threshold)
            hl = _soft_threshold(hl, threshold)
            hh = _soft_threshold(hh, threshold)
        x = _haar_inverse_2d(x, lh, hl, hh)
        h, w = shapes[level]
        x = x[:h, :w]
    return SonarImage(config, np.clip(x, 0.0, 1.0))


# ---------------------------------------------------------------------------
# CFAR thresholding
# ---------------------------------------------------------------------------


def cfar_threshold(image: SonarImage, params: CfarParams) -> SonarImage:
    """SOCA/GOCA-CFAR binarization, each beam scanned independently.

    For every cell the leading and trailing window means (n_w cells beyond
    the guard cells on each side) form the statistic S = min (SOCA) or max
    (GOCA); the cell is 1 iff its value exceeds alpha * S with
    alpha = n_w * (p_fa^(-1/n_w) - 1). Cells whose leading or trailing
    window would leave the beam fall back to the single available window
    (one-sided CFAR), so the output has the same shape as the input.

    Window sums are recomputed per cell from a strided view (no running
    add/subtract), so the result matches a naive per-cell recomputation
    bit for bit.
    """
    config = image.config
    n_bins = config.n_bins
    n_w, guard = params.n_w, params.guard
    if 2 * (n_w + guard) + 1 > n_bins:
        raise ValidationError(
            f"CFAR window does not fit: 2*({n_w}+{guard})+1 > n_bins={n_bins}"
        )
    data = image.data
    alpha = params.alpha

    # window_means[b, s] = mean of data[b, s : s + n_w]
    window_means = sliding_window_view(data, n_w, axis=1).sum(axis=-1) / n_w

    lead = np.full((config.n_beams, n_bins), np.nan)
    trail = np.full((config.n_beams, n_bins), np.nan)
    # leading window for cell c starts at c - guard - n_w; trailing at c + guard + 1
    first_lead = n_w + guard
    lead[:, first_lead:] = window_means[:, : n_bins - first_lead]
    last_trail = n_bins - 1 - guard - n_w
    trail[:, : last_trail + 1] = window_means[:, guard + 1 : guard + 1 + last_trail + 1]

    has_lead = np.zeros(n_bins, dtype=bool)
    has_lead[first_lead:] = True
    has_trail = np.zeros(n_bins, dtype=bool)
    has_trail[: last_trail + 1] = True

    stat = np.empty_like(data)
    both = has_lead & has_trail
    if params.mode == "soca":
        stat[:, both] = np.minimum(lead[:, both], trail[:, both])
    else:
        stat[:, both] = np.maximum(lead[:, both], trail[:, both])
    only_lead = has_lead & ~has_trail
    only_trail = has_trail & ~has_lead
    stat[:, only_lead] = lead[:, only_lead]
    stat[:, only_trail] = trail[:, only_trail]

    out = (data > alpha * stat).astype(np.float64)
    return SonarImage(config, out)


def enhance_pipeline(
    image: SonarImage,
    pattern: SonarImage,
    dwt: DwtParams,
    cfar: CfarParams,
    epsilon: float = 1e-3,
    skip_dwt: bool = False,
    skip_cfar: bool = False,
) -> SonarImage:
    """Full enhancement chain: normalize, then denoise, then binarize."""
    out = normalize_insonification(image, pattern, epsilon=epsilon)
    if not skip_dwt:
        out = dwt_denoise(out, dwt)
    if not skip_cfar:
        out = cfar_threshold(out, cfar)
    return out
