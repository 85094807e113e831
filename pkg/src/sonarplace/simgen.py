"""Synthetic dataset generation.

Scenes are planar line-segment outlines with per-segment reflectivity. A
square grid of anchor poses is laid out around each scene, every anchor
gets a handful of position-perturbed sample poses, and a small 2-D
raycast renderer turns each pose into a polar sonar image: Lambertian
|cos| shading, first-return occlusion (acoustic shadow), multiplicative
speckle, and an additive noise floor.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    DatasetManifest,
    Pose2D,
    ScanRecord,
    SonarConfig,
    SonarImage,
    SonarPlaceError,
    ValidationError,
    derive_rng,
    derive_seed,
    save_manifest,
    write_image,
)

# stream id mixed into pose-jitter seeds so they never collide with the
# per-record render streams (which use the bare record id)
_POSE_STREAM = 0x706F7365

SPREAD_SIGMA_BINS = 1.0
SPREAD_CUTOFF_BINS = 4
SPECKLE_LO, SPECKLE_HI = 0.8, 1.2
ADDITIVE_NOISE_MAX = 0.02


class EmptyDatasetError(SonarPlaceError):
    """Raised when collision removal leaves no anchor cells."""


@dataclass(frozen=True)
class Segment:
    """Planar wall segment with a sonar reflectivity in (0, 1]."""

    x1: float
    y1: float
    x2: float
    y2: float
    reflectivity: float

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2", "reflectivity"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"segment field {name} must be finite")
        if self.x1 == self.x2 and self.y1 == self.y2:
            raise ValidationError("segment endpoints must differ")
        if not (0.0 < self.reflectivity <= 1.0):
            raise ValidationError(f"reflectivity must be in (0, 1], got {self.reflectivity}")

    @property
    def midpoint(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)


@dataclass(frozen=True)
class Scene:
    """A named asset: one or more segments in a shared world frame."""

    asset_id: int
    segments: tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValidationError("scene needs at least one segment")

    def centroid(self) -> tuple[float, float]:
        """Mean of the segment midpoints; the grid and headings center here."""
        mids = np.array([s.midpoint for s in self.segments])
        cx, cy = mids.mean(axis=0)
        return float(cx), float(cy)


@dataclass(frozen=True)
class GridSpec:
    """Acquisition grid: cell layout plus per-anchor perturbation."""

    grid_size_m: float = 50.0
    cell_size_m: float = 2.0
    noise_max_m: float = 0.75
    n_samples_per_anchor: int = 5

    def __post_init__(self):
        if not (math.isfinite(self.grid_size_m) and self.grid_size_m > 0):
            raise ValidationError(f"grid_size_m must be positive, got {self.grid_size_m}")
        if not (math.isfinite(self.cell_size_m) and self.cell_size_m > 0):
            raise ValidationError(f"cell_size_m must be positive, got {self.cell_size_m}")
        if self.cell_size_m > self.grid_size_m:
            raise ValidationError("cell_size_m must not exceed grid_size_m")
        if not (math.isfinite(self.noise_max_m) and self.noise_max_m >= 0):
            raise ValidationError(f"noise_max_m must be non-negative, got {self.noise_max_m}")
        if self.n_samples_per_anchor < 1:
            raise ValidationError("n_samples_per_anchor must be at least 1")


# ---------------------------------------------------------------------------
# Scene I/O and builtins
# ---------------------------------------------------------------------------


def load_scene(path: str | os.PathLike) -> Scene:
    """Read a scene JSON: {"asset_id": int, "segments": [[x1,y1,x2,y2,refl], ...]}."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        asset_id = int(doc["asset_id"])
        segs = [Segment(*(float(v) for v in row)) for row in doc["segments"]]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed scene file {path}: {exc}") from exc
    return Scene(asset_id, tuple(segs))


def save_scene(scene: Scene, path: str | os.PathLike) -> None:
    doc = {
        "asset_id": scene.asset_id,
        "segments": [[s.x1, s.y1, s.x2, s.y2, s.reflectivity] for s in scene.segments],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def builtin_scene(asset_id: int) -> Scene:
    """One of three bundled toy assets with deliberately different layouts.

    1: L-shaped wall; 2: U-shaped basin open to the west; 3: bent
    breakwater with a detached southern bar.  All three are extended wall
    structures without rotational symmetry, so viewpoints that share
    footprint see overlapping stretches of the same walls while distant
    viewpoints see clearly different profiles.  Reflectivity varies along
    each structure to give bearing landmarks.  The three live far apart in
    the world frame (hundreds of meters) so cross-asset pose pairs never
    overlap.
    """
    if asset_id == 1:
        return Scene(1, (
            Segment(-10.0, -10.0, 10.0, -10.0, 0.90),
            Segment(10.0, -10.0, 10.0, 10.0, 0.75),
        ))
    if asset_id == 2:
        return Scene(2, (
            Segment(192.0, 12.0, 202.0, 12.0, 0.95),
            Segment(202.0, 12.0, 212.0, 12.0, 0.70),
            Segment(212.0, 12.0, 212.0, 2.0, 0.85),
            Segment(212.0, 2.0, 212.0, -8.0, 0.60),
            Segment(212.0, -8.0, 202.0, -8.0, 0.90),
            Segment(202.0, -8.0, 192.0, -8.0, 0.75),
        ))
    if asset_id == 3:
        return Scene(3, (
            Segment(-14.0, 204.0, -2.0, 210.0, 0.90),
            Segment(-2.0, 210.0, 10.0, 204.0, 0.70),
            Segment(-8.0, 190.0, 2.0, 188.0, 0.80),
            Segment(2.0, 188.0, 12.0, 190.0, 0.55),
        ))
    raise ValidationError(f"builtin scene id must be 1, 2 or 3, got {asset_id}")


# ---------------------------------------------------------------------------
# Pose layout
# ---------------------------------------------------------------------------


def point_segment_distance(px: float, py: float, seg: Segment) -> float:
    """Euclidean distance from a point to a closed segment."""
    wx, wy = seg.x2 - seg.x1, seg.y2 - seg.y1
    u = ((px - seg.x1) * wx + (py - seg.y1) * wy) / (wx * wx + wy * wy)
    u = min(max(u, 0.0), 1.0)
    return math.hypot(px - (seg.x1 + u * wx), py - (seg.y1 + u * wy))


def build_anchor_poses(scene: Scene, spec: GridSpec, t0: float = 0.0) -> list[Pose2D]:
    """Anchor poses at surviving grid-cell centers, aimed at the centroid.

    The grid has floor(grid_size / cell_size) cells per side, centered on
    the scene centroid. Cells whose center lies closer than cell_size / 2
    to any segment are removed (the pose would collide with the asset).
    Surviving anchors are stamped t0, t0 + 1, ... in row-major order
    (rows sweep y upward, columns sweep x rightward).
    """
    n = int(math.floor(spec.grid_size_m / spec.cell_size_m))
    cx, cy = scene.centroid()
    half_span = (n - 1) / 2.0
    poses: list[Pose2D] = []
    t = t0
    for i in range(n):
        y = cy + (i - half_span) * spec.cell_size_m
        for j in range(n):
            x = cx + (j - half_span) * spec.cell_size_m
            if any(point_segment_distance(x, y, s) < spec.cell_size_m / 2.0 for s in scene.segments):
                continue
            heading = math.atan2(cy - y, cx - x)
            poses.append(Pose2D(x, y, heading, t))
            t += 1.0
    if not poses:
        raise EmptyDatasetError(
            f"all {n * n} grid cells collide with asset {scene.asset_id}"
        )
    return poses


def sample_perturbed(
    anchor: Pose2D,
    scene: Scene,
    spec: GridSpec,
    seed: int,
    anchor_id: int = 0,
) -> list[Pose2D]:
    """Perturbed sample poses around one anchor.

    Each sample displaces the anchor by a uniform-random direction and a
    uniform-random radius in [0, noise_max_m], re-aims the heading at the
    scene centroid, and is stamped anchor.t + 0.1 * (j + 1) so samples sit
    inside their anchor's one-second slot. Deterministic in
    (seed, anchor_id).
    """
    rng = derive_rng(seed, _POSE_STREAM, anchor_id)
    cx, cy = scene.centroid()
    out: list[Pose2D] = []
    for j in range(spec.n_samples_per_anchor):
        direction = rng.uniform(0.0, 2.0 * math.pi)
        radius = rng.uniform(0.0, spec.noise_max_m)
        x = anchor.x + radius * math.cos(direction)
        y = anchor.y + radius * math.sin(direction)
        heading = math.atan2(cy - y, cx - x)
        out.append(Pose2D(x, y, heading, anchor.t + 0.1 * (j + 1)))
    return out


# ---------------------------------------------------------------------------
# Raycast renderer
# ---------------------------------------------------------------------------


def beam_angles(pose: Pose2D, config: SonarConfig) -> np.ndarray:
    """Center angle of each beam: heading - aperture/2 + (b + 0.5) * aperture / n_beams."""
    b = np.arange(config.n_beams, dtype=np.float64)
    return pose.heading - config.aperture_rad / 2.0 + (b + 0.5) * config.aperture_rad / config.n_beams


def render_scan(
    scene: Scene,
    pose: Pose2D,
    config: SonarConfig,
    noise_seed: int = 0,
    add_noise: bool = True,
) -> SonarImage:
    """Render one polar sonar image of the scene from a pose.

    Per beam, the nearest ray-segment intersection within max_range_m
    deposits intensity reflectivity * |cos(incidence)| into bin
    floor(d / max_range * n_bins), spread by a 1-bin-sigma Gaussian
    truncated at +/-4 bins. Everything past the spread is zero (acoustic
    shadow). With add_noise, per-cell multiplicative speckle uniform in
    [0.8, 1.2] and additive noise uniform in [0, 0.02] are applied, both
    drawn from noise_seed, then the image is clamped to [0, 1].
    """
    angles = beam_angles(pose, config)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)  # (B, 2)

    p = np.array([[s.x1, s.y1] for s in scene.segments])  # (S, 2)
    w = np.array([[s.x2 - s.x1, s.y2 - s.y1] for s in scene.segments])  # (S, 2)
    refl = np.array([s.reflectivity for s in scene.segments])
    r = p - np.array([pose.x, pose.y])  # (S, 2)

    # ray o + t*d meets segment p + u*w at t = cross(r, w)/cross(d, w),
    # u = cross(r, d)/cross(d, w)
    denom = dirs[:, 0:1] * w[None, :, 1] - dirs[:, 1:2] * w[None, :, 0]  # (B, S)
    cross_rw = r[:, 0] * w[:, 1] - r[:, 1] * w[:, 0]  # (S,)
    cross_rd = r[None, :, 0] * dirs[:, 1:2] - r[None, :, 1] * dirs[:, 0:1]  # (B, S)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross_rw[None, :] / denom
        u = cross_rd / denom
    valid = (np.abs(denom) > 1e-12) & (t > 0.0) & (u >= 0.0) & (u <= 1.0) & (t < config.max_range_m)
    t = np.where(valid, t, np.inf)
    nearest = np.argmin(t, axis=1)  # (B,)
    beam_idx = np.arange(config.n_beams)
    dist = t[beam_idx, nearest]
    hit = np.isfinite(dist)

    seg_len = np.hypot(w[:, 0], w[:, 1])
    normals = np.stack([-w[:, 1], w[:, 0]], axis=1) / seg_len[:, None]  # (S, 2)
    cos_inc = np.abs(np.einsum("bi,bi->b", dirs, normals[nearest]))
    intensity = refl[nearest] * cos_inc

    img = np.zeros((config.n_beams, config.n_bins), dtype=np.float64)
    if hit.any():
        hit_bins = np.floor(dist[hit] / config.max_range_m * config.n_bins).astype(int)
        offsets = np.arange(-SPREAD_CUTOFF_BINS, SPREAD_CUTOFF_BINS + 1)
        kernel = np.exp(-(offsets.astype(np.float64) ** 2) / (2.0 * SPREAD_SIGMA_BINS**2))
        bins = hit_bins[:, None] + offsets[None, :]
        inside = (bins >= 0) & (bins < config.n_bins)
        rows = np.broadcast_to(beam_idx[hit][:, None], bins.shape)
        values = intensity[hit][:, None] * kernel[None, :]
        img[rows[inside], bins[inside]] = values[inside]

    if add_noise:
        rng = derive_rng(noise_seed)
        speckle = rng.uniform(SPECKLE_LO, SPECKLE_HI, size=img.shape)
        additive = rng.uniform(0.0, ADDITIVE_NOISE_MAX, size=img.shape)
        img = img * speckle + additive
    return SonarImage(config, np.clip(img, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Dataset assembly
# ---------------------------------------------------------------------------

ASSET_TIME_GAP_S = 10.0


def generate_dataset(
    scenes: Sequence[Scene],
    spec: GridSpec,
    config: SonarConfig,
    seed: int,
    out_dir: str | os.PathLike,
) -> DatasetManifest:
    """Render a full multi-asset dataset and write images plus manifest.

    Per scene (in list order): anchors from build_anchor_poses, then
    n_samples_per_anchor perturbed samples per anchor. Record ids are
    sequential in generation order (anchor, then its samples). Each
    record's render noise stream is derived from (seed, record id), so
    the output is independent of render order. Scene timebases are spaced
    by the anchor count plus a 10 s gap, keeping assets apart in time as
    well as space. Images land in out_dir/images/<id>.pgm; the manifest
    in out_dir/manifest.json.
    """
    if not scenes:
        raise ValidationError("generate_dataset requires at least one scene")
    ids = [s.asset_id for s in scenes]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"duplicate asset ids in scenes: {ids}")
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    records: list[ScanRecord] = []
    next_id = 0
    base_t = 0.0
    for scene in scenes:
        anchors = build_anchor_poses(scene, spec, t0=base_t)
        for anchor in anchors:
            anchor_id = next_id
            next_id += 1
            records.append(_render_record(scene, anchor, config, seed, anchor_id, "anchor", images_dir))
            for sample_pose in sample_perturbed(anchor, scene, spec, seed, anchor_id=anchor_id):
                sample_id = next_id
                next_id += 1
                records.append(_render_record(scene, sample_pose, config, seed, sample_id, "sample", images_dir))
        base_t += len(anchors) * 1.0 + ASSET_TIME_GAP_S

    manifest = DatasetManifest(config=config, records=records, generator_seed=seed)
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest


def _render_record(
    scene: Scene,
    pose: Pose2D,
    config: SonarConfig,
    seed: int,
    record_id: int,
    role: str,
    images_dir: Path,
) -> ScanRecord:
    image = render_scan(scene, pose, config, noise_seed=derive_seed(seed, record_id))
    name = f"{record_id:06d}.pgm"
    write_image(image, images_dir / name)
    return ScanRecord(
        id=record_id,
        pose=pose,
        image_path=f"images/{name}",
        role=role,
        asset_id=scene.asset_id,
    )
