"""Triplet-loss training of the encoder.

Positive and negative candidates are labeled by field-of-view overlap,
a fresh pool is drawn from them for every anchor at every epoch, and one
triplet per pool is mined (batch-easiest positive, batch-hardest
negative). The hinge loss max(0, d(A,P) - d(A,N) + margin) is
backpropagated through the unit normalization, the frozen random
projection, and the convolution stack. The optimizer is plain gradient
descent with a fixed learning rate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import (
    DatasetManifest,
    ScanRecord,
    SonarImage,
    SonarPlaceError,
    ValidationError,
    derive_rng,
)
from .descriptor import (
    EncoderParams,
    EncoderWeights,
    RgpMatrix,
    encoder_forward,
    init_encoder,
    resize_array,
)
from .geometry import DEFAULT_N_ARC, is_positive_pair
from . import evaluation

_POOL_STREAM = 0x706F6F6C
_SHUFFLE_STREAM = 0x73687566


class TrainingError(SonarPlaceError):
    """Training aborted (non-finite loss or unusable dataset)."""


@dataclass(frozen=True)
class TripletConfig:
    """Loss, pool, and optimizer settings."""

    margin: float = 0.5
    n_neg: int = 10
    n_pos: int = 5
    tau: float = 0.7
    max_heading_diff_rad: float = math.pi / 2.0
    learning_rate: float = 1e-3
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.margin) and self.margin >= 0.0):
            raise ValidationError(f"margin must be non-negative, got {self.margin}")
        if self.n_neg < 1 or self.n_pos < 1:
            raise ValidationError("pool sizes must be at least 1")
        if not (0.0 <= self.tau <= 1.0):
            raise ValidationError(f"tau must be in [0, 1], got {self.tau}")
        if not (0.0 < self.max_heading_diff_rad <= math.pi):
            raise ValidationError("max_heading_diff_rad must be in (0, pi]")
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0.0):
            raise ValidationError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be at least 1, got {self.epochs}")


@dataclass(frozen=True)
class Triplet:
    """Record ids of one mined (anchor, positive, negative)."""

    anchor_id: int
    positive_id: int
    negative_id: int

    def __post_init__(self):
        if len({self.anchor_id, self.positive_id, self.negative_id}) != 3:
            raise ValidationError("triplet ids must be distinct")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    mean_loss: float
    active_fraction: float
    val_auc: float | None = None


@dataclass(frozen=True)
class TrainResult:
    weights: EncoderWeights
    log: tuple[EpochLog, ...]
    skipped_anchors: int


def triplet_loss(d_ap: float, d_an: float, margin: float) -> float:
    """Hinge loss max(0, d(A,P) - d(A,N) + margin) on precomputed distances."""
    return max(0.0, d_ap - d_an + margin)


def _label_candidates(
    anchor: ScanRecord,
    manifest: DatasetManifest,
    config: TripletConfig,
    n_arc: int = DEFAULT_N_ARC,
) -> tuple[list[int], list[int]]:
    """All positive and negative record ids for one anchor, by overlap."""
    positives: list[int] = []
    negatives: list[int] = []
    for rec in manifest.records:
        if rec.id == anchor.id:
            continue
        if is_positive_pair(
            anchor.pose,
            rec.pose,
            manifest.config,
            tau=config.tau,
            max_heading_diff=config.max_heading_diff_rad,
            n_arc=n_arc,
        ):
            positives.append(rec.id)
        else:
            negatives.append(rec.id)
    return positives, negatives


def candidate_pools(
    anchor: ScanRecord,
    manifest: DatasetManifest,
    config: TripletConfig,
    n_arc: int = DEFAULT_N_ARC,
) -> tuple[list[int], list[int]]:
    """Seeded uniform pools of positive and negative record ids for one anchor.

    Every other record is labeled by is_positive_pair against the anchor
    pose; n_pos positives and n_neg negatives are drawn uniformly without
    replacement (pools smaller than requested are returned whole). The
    draw depends only on (config.seed, anchor.id).
    """
    positives, negatives = _label_candidates(anchor, manifest, config, n_arc=n_arc)
    rng = derive_rng(config.seed, _POOL_STREAM, anchor.id)
    return (
        _draw(positives, config.n_pos, rng),
        _draw(negatives, config.n_neg, rng),
    )


def _draw(pool: list[int], k: int, rng: np.random.Generator) -> list[int]:
    if len(pool) <= k:
        return list(pool)
    idx = rng.choice(len(pool), size=k, replace=False)
    return [pool[i] for i in idx]


def mine_triplet(
    anchor_id: int,
    positive_ids: Sequence[int],
    negative_ids: Sequence[int],
    vectors: Mapping[int, np.ndarray],
) -> Triplet:
    """Easiest positive and hardest negative under the current descriptors.

    Both picks are the argmin of cosine distance to the anchor; ties go to
    the lowest record id, which makes the result independent of pool order.
    """
    if not positive_ids or not negative_ids:
        raise ValidationError("cannot mine a triplet from an empty pool")
    va = vectors[anchor_id]

    def dist(rid: int) -> float:
        return 1.0 - float(np.dot(va, vectors[rid]))

    pos = min(positive_ids, key=lambda rid: (dist(rid), rid))
    neg = min(negative_ids, key=lambda rid: (dist(rid), rid))
    return Triplet(anchor_id, pos, neg)


# ---------------------------------------------------------------------------
# Differentiable descriptor pipeline
# ---------------------------------------------------------------------------


def _embed(
    x01: np.ndarray, weights: EncoderWeights, matrix: RgpMatrix, keep_cache: bool = False
):
    """Forward pass to a unit descriptor: (v, projection norm, cache, degenerate)."""
    features, cache = encoder_forward(x01, weights, keep_cache=keep_cache)
    y = matrix.entries @ features
    norm = float(np.linalg.norm(y))
    if norm == 0.0:
        v = np.zeros(matrix.rows, dtype=np.float64)
        v[0] = 1.0
        return v, 0.0, cache, True
    return y / norm, norm, cache, False


def _stack_backward(
    dfeatures: np.ndarray, weights: EncoderWeights, cache: list
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Gradient of a scalar loss w.r.t. every kernel and bias.

    ``cache`` is the per-stage (window view, pre-activation) list from
    encoder_forward; ``dfeatures`` is the loss gradient w.r.t. the
    flattened final activation.
    """
    params = weights.params
    stride = params.stride_per_stage
    k = params.kernel
    pad = k // 2
    shapes = params.stage_shapes()
    da = dfeatures.reshape(shapes[-1])
    dkernels: list[np.ndarray] = [np.empty(0)] * params.n_stages
    dbiases: list[np.ndarray] = [np.empty(0)] * params.n_stages
    for idx in range(params.n_stages - 1, -1, -1):
        windows, z = cache[idx]
        dz = da * (z > 0.0)
        dkernels[idx] = np.tensordot(dz, windows, axes=([1, 2], [1, 2]))
        dbiases[idx] = dz.sum(axis=(1, 2))
        if idx == 0:
            break
        prev_c, prev_h, prev_w = shapes[idx - 1]
        oh, ow = dz.shape[1], dz.shape[2]
        # scatter dz * kernel back onto the padded previous activation
        contrib = np.tensordot(weights.kernels[idx], dz, axes=([0], [0]))  # (ic, k, k, oh, ow)
        da_pad = np.zeros((prev_c, prev_h + 2 * pad, prev_w + 2 * pad), dtype=np.float64)
        for kh in range(k):
            for kw in range(k):
                da_pad[:, kh : kh + stride * oh : stride, kw : kw + stride * ow : stride] += contrib[:, kh, kw]
        da = da_pad[:, pad : pad + prev_h, pad : pad + prev_w]
    return dkernels, dbiases


def _descriptor_backward(
    g: np.ndarray, v: np.ndarray, y_norm: float, matrix: RgpMatrix
) -> np.ndarray:
    """Pull a gradient w.r.t. the unit descriptor back to the feature vector."""
    dy = (g - float(np.dot(g, v)) * v) / y_norm
    return matrix.entries.T @ dy


def triplet_gradients(
    xa: np.ndarray,
    xp: np.ndarray,
    xn: np.ndarray,
    weights: EncoderWeights,
    matrix: RgpMatrix,
    margin: float,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Loss and its analytic gradient w.r.t. all encoder weights.

    Inputs are resized images. All three branches share the encoder, so
    the gradient sums their contributions; an inactive hinge (or a
    degenerate branch, whose fallback vector is constant) contributes zero.
    """
    ea = _embed(xa, weights, matrix, keep_cache=True)
    ep = _embed(xp, weights, matrix, keep_cache=True)
    en = _embed(xn, weights, matrix, keep_cache=True)
    return _gradients_from_embeds(ea, ep, en, weights, matrix, margin)


def triplet_loss_value(
    xa: np.ndarray,
    xp: np.ndarray,
    xn: np.ndarray,
    weights: EncoderWeights,
    matrix: RgpMatrix,
    margin: float,
) -> float:
    """Loss only, for finite-difference probing of triplet_gradients."""
    va = _embed(xa, weights, matrix)[0]
    vp = _embed(xp, weights, matrix)[0]
    vn = _embed(xn, weights, matrix)[0]
    d_ap = 1.0 - float(np.dot(va, vp))
    d_an = 1.0 - float(np.dot(va, vn))
    return triplet_loss(d_ap, d_an, margin)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def train(
    manifest: DatasetManifest,
    images: Mapping[int, SonarImage],
    config: TripletConfig,
    encoder_params: EncoderParams,
    rgp_seed: int,
    val_manifest: DatasetManifest | None = None,
    val_images: Mapping[int, SonarImage] | None = None,
    val_s_seconds: float = 3.0,
    allow_single_asset: bool = False,
    n_arc: int = DEFAULT_N_ARC,
) -> TrainResult:
    """Run seeded triplet training over a manifest of enhanced images.

    Per epoch, anchors are visited in a seeded shuffled order; each visit
    recomputes the pool descriptors under the current weights, mines one
    triplet, and applies one gradient-descent step. Overlap labeling runs
    once per anchor up front (it depends only on poses); the n_pos/n_neg
    pools are redrawn from the labeled candidates every epoch, so a small
    pool cannot pin training to the same few comparisons for the whole
    run. Anchors without a usable candidate set are skipped with a counted
    warning. When a validation manifest is supplied, the epoch log carries
    the validation AUC at the given exclusion window. Deterministic from
    the seeds alone.
    """
    assets = {r.asset_id for r in manifest.records}
    if len(assets) < 2 and not allow_single_asset:
        raise ValidationError(
            "training manifest has a single asset; pass allow_single_asset=True to override"
        )
    weights = init_encoder(encoder_params)
    matrix = RgpMatrix(rgp_seed, encoder_params.feature_length)
    h, w = encoder_params.input_h, encoder_params.input_w
    resized = {rid: resize_array(img.data, h, w) for rid, img in images.items()}
    for rec in manifest.records:
        if rec.id not in resized:
            raise ValidationError(f"no image supplied for record {rec.id}")

    anchors = [r for r in manifest.records if r.role == "anchor"]
    candidates: dict[int, tuple[list[int], list[int]]] = {}
    skipped = 0
    for anchor in anchors:
        pos, neg = _label_candidates(anchor, manifest, config, n_arc=n_arc)
        if pos and neg:
            candidates[anchor.id] = (pos, neg)
        else:
            skipped += 1
    if skipped:
        warnings.warn(f"skipped {skipped} anchors with empty candidate pools", stacklevel=2)
    usable = [a for a in anchors if a.id in candidates]
    if not usable:
        raise TrainingError("no anchor has both a positive and a negative candidate")

    val_state = None
    if val_manifest is not None:
        if val_images is None:
            raise ValidationError("val_images required when val_manifest is given")
        val_resized = {r.id: resize_array(val_images[r.id].data, h, w) for r in val_manifest.records}
        val_gt = evaluation.gt_table(
            val_manifest, tau=config.tau, max_heading_diff=config.max_heading_diff_rad, n_arc=n_arc
        )
        val_t = np.array([r.pose.t for r in val_manifest.records])
        val_state = (val_resized, val_gt, val_t, [r.id for r in val_manifest.records])

    log: list[EpochLog] = []
    for epoch in range(config.epochs):
        order = derive_rng(config.seed, _SHUFFLE_STREAM, epoch).permutation(len(usable))
        losses: list[float] = []
        active = 0
        for k in order:
            anchor = usable[int(k)]
            all_pos, all_neg = candidates[anchor.id]
            pool_rng = derive_rng(config.seed, _POOL_STREAM, epoch, anchor.id)
            pos_ids = _draw(all_pos, config.n_pos, pool_rng)
            neg_ids = _draw(all_neg, config.n_neg, pool_rng)
            member_ids = [anchor.id] + list(pos_ids) + list(neg_ids)
            embeds = {
                rid: _embed(resized[rid], weights, matrix, keep_cache=True)
                for rid in member_ids
            }
            triplet = mine_triplet(
                anchor.id, pos_ids, neg_ids, {rid: e[0] for rid, e in embeds.items()}
            )
            loss, dkernels, dbiases = _gradients_from_embeds(
                embeds[triplet.anchor_id],
                embeds[triplet.positive_id],
                embeds[triplet.negative_id],
                weights,
                matrix,
                config.margin,
            )
            if not math.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} for triplet "
                    f"(anchor={triplet.anchor_id}, positive={triplet.positive_id}, "
                    f"negative={triplet.negative_id})"
                )
            losses.append(loss)
            if loss > 0.0:
                active += 1
                for i, (dk, db) in enumerate(zip(dkernels, dbiases)):
                    weights.kernels[i][...] -= config.learning_rate * dk
                    weights.biases[i][...] -= config.learning_rate * db
        val_auc = _validation_auc(val_state, weights, matrix, val_s_seconds) if val_state else None
        log.append(EpochLog(epoch, float(np.mean(losses)), active / len(losses), val_auc))
    return TrainResult(weights, tuple(log), skipped)


def _gradients_from_embeds(ea, ep, en, weights, matrix, margin):
    """Same as triplet_gradients but on already-computed embeddings."""
    va, vp, vn = ea[0], ep[0], en[0]
    d_ap = 1.0 - float(np.dot(va, vp))
    d_an = 1.0 - float(np.dot(va, vn))
    loss = triplet_loss(d_ap, d_an, margin)
    dkernels = [np.zeros_like(w) for w in weights.kernels]
    dbiases = [np.zeros_like(b) for b in weights.biases]
    if loss > 0.0:
        for g, (v, norm, cache, degenerate) in zip((vn - vp, -va, va), (ea, ep, en)):
            if degenerate:
                continue
            dfeat = _descriptor_backward(g, v, norm, matrix)
            dk, db = _stack_backward(dfeat, weights, cache)
            for i in range(len(dkernels)):
                dkernels[i] += dk[i]
                dbiases[i] += db[i]
    return loss, dkernels, dbiases


def _validation_auc(val_state, weights, matrix, s_seconds: float) -> float:
    val_resized, val_gt, val_t, val_ids = val_state
    vectors = np.stack([
        _embed(val_resized[rid], weights, matrix)[0] for rid in val_ids
    ])
    curve = evaluation.pr_curve(vectors, val_gt, timestamps=val_t, s_seconds=s_seconds)
    return evaluation.auc(curve)
