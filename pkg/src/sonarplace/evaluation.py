"""Retrieval metrics over descriptor sets.

Match tables (predicted and ground truth), the precision/recall curve
with area under it, recall at 95% precision, the F1-optimal operating
point, exhaustive nearest-neighbor search with a temporal exclusion
window, precision over FOV overlap, and a classical-MDS 2-D export.
Everything is CSV-out only; figures are the report layer's job.

Match tables are plain (n, n) boolean arrays aligned with the manifest's
record order; the diagonal is always False and ignored. Pair metrics
count each unordered pair once (upper triangle).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DatasetManifest, Descriptor, SonarPlaceError, ValidationError, wrap_angle
from .geometry import (
    DEFAULT_MAX_HEADING_DIFF,
    DEFAULT_N_ARC,
    DEFAULT_OVERLAP_TAU,
    convex_intersection_area,
    fov_overlap,
    polygon_area,
    sector_polygon,
)

DEFAULT_THRESHOLDS = 512
DEFAULT_OVERLAP_LEVELS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


class MetricUndefinedError(SonarPlaceError):
    """Ground truth has no positives or no negatives; PR metrics are undefined."""


@dataclass(frozen=True)
class PrCurve:
    """Precision/recall sweep over strictly increasing thresholds."""

    thresholds: np.ndarray
    precisions: np.ndarray
    recalls: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=np.float64)
        p = np.asarray(self.precisions, dtype=np.float64)
        r = np.asarray(self.recalls, dtype=np.float64)
        if not (t.ndim == 1 and t.shape == p.shape == r.shape and t.size > 0):
            raise ValidationError("curve arrays must be equal-length non-empty 1-D")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("thresholds must be strictly increasing")
        if p.min() < 0 or p.max() > 1 or r.min() < 0 or r.max() > 1:
            raise ValidationError("precision and recall must lie in [0, 1]")
        for name, arr in (("thresholds", t), ("precisions", p), ("recalls", r)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def as_matrix(descriptors) -> np.ndarray:
    """Descriptors as an (n, 128) float64 matrix of unit rows."""
    if isinstance(descriptors, np.ndarray):
        m = np.asarray(descriptors, dtype=np.float64)
    else:
        m = np.stack([d.values if isinstance(d, Descriptor) else np.asarray(d) for d in descriptors])
    if m.ndim != 2:
        raise ValidationError(f"descriptor matrix must be 2-D, got shape {m.shape}")
    return m


def distance_matrix(descriptors) -> np.ndarray:
    """Pairwise cosine distances, clipped to [0, 2] and exactly symmetric."""
    v = as_matrix(descriptors)
    d = np.clip(1.0 - v @ v.T, 0.0, 2.0)
    low = np.tril_indices(d.shape[0], -1)
    d[low] = d.T[low]
    return d


# ---------------------------------------------------------------------------
# Match tables
# ---------------------------------------------------------------------------


def gt_table(
    manifest: DatasetManifest,
    tau: float = DEFAULT_OVERLAP_TAU,
    max_heading_diff: float = DEFAULT_MAX_HEADING_DIFF,
    n_arc: int = DEFAULT_N_ARC,
) -> np.ndarray:
    """Ground-truth positive-pair table over the manifest's record order.

    Entry (i, j) mirrors is_positive_pair(pose_i, pose_j): wrapped heading
    difference at most max_heading_diff and FOV overlap at least tau.
    Heading and 2R-distance prefilters skip the polygon clipping for pairs
    that cannot match.
    """
    records = manifest.records
    n = len(records)
    xs = np.array([r.pose.x for r in records])
    ys = np.array([r.pose.y for r in records])
    hs = np.array([r.pose.heading for r in records])
    out = np.zeros((n, n), dtype=bool)
    polys: list = [None] * n
    areas = np.empty(n)
    reach = 2.0 * manifest.config.max_range_m
    for i in range(n):
        for j in range(i + 1, n):
            if abs(wrap_angle(hs[i] - hs[j])) > max_heading_diff:
                continue
            if math.hypot(xs[i] - xs[j], ys[i] - ys[j]) > reach:
                continue
            if polys[i] is None:
                polys[i] = sector_polygon(records[i].pose, manifest.config, n_arc)
                areas[i] = polygon_area(polys[i])
            if polys[j] is None:
                polys[j] = sector_polygon(records[j].pose, manifest.config, n_arc)
                areas[j] = polygon_area(polys[j])
            overlap = min(max(convex_intersection_area(polys[i], polys[j]) / areas[i], 0.0), 1.0)
            if overlap >= tau:
                out[i, j] = out[j, i] = True
    return out


def pred_table(descriptors, threshold: float) -> np.ndarray:
    """Predicted matches: cosine distance strictly below the threshold."""
    d = distance_matrix(descriptors)
    out = d < threshold
    np.fill_diagonal(out, False)
    return out


def overlap_matrix(manifest: DatasetManifest, n_arc: int = DEFAULT_N_ARC) -> np.ndarray:
    """Full pairwise FOV-overlap matrix (diagonal 1), for the overlap export."""
    records = manifest.records
    n = len(records)
    out = np.zeros((n, n))
    np.fill_diagonal(out, 1.0)
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = fov_overlap(
                records[i].pose, records[j].pose, manifest.config, n_arc
            )
    return out


# ---------------------------------------------------------------------------
# Precision / recall
# ---------------------------------------------------------------------------


def pr_curve(
    descriptors,
    gt: np.ndarray,
    thresholds: np.ndarray | None = None,
    timestamps: np.ndarray | None = None,
    s_seconds: float = 0.0,
) -> PrCurve:
    """Precision and recall over a threshold sweep on unordered pairs.

    Counts run over the upper triangle only. When timestamps are given,
    pairs closer than or at s_seconds apart in time are excluded from the
    counts (the temporal exclusion window). Precision is defined as 1
    where TP + FP = 0. Default sweep: 512 uniform thresholds in [0, 2].
    """
    v = as_matrix(descriptors)
    n = v.shape[0]
    if gt.shape != (n, n):
        raise ValidationError(f"gt table shape {gt.shape} does not match {n} descriptors")
    d = distance_matrix(v)
    iu = np.triu_indices(n, 1)
    pair_d = d[iu]
    pair_y = gt[iu]
    if timestamps is not None:
        timestamps = np.asarray(timestamps, dtype=np.float64)
        if timestamps.shape != (n,):
            raise ValidationError("timestamps must align with descriptors")
        keep = np.abs(timestamps[iu[0]] - timestamps[iu[1]]) > s_seconds
        pair_d = pair_d[keep]
        pair_y = pair_y[keep]
    n_pos = int(pair_y.sum())
    n_neg = int(pair_y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError(
            f"ground truth has {n_pos} positive and {n_neg} negative pairs; "
            "precision/recall is undefined"
        )
    if thresholds is None:
        thresholds = np.linspace(0.0, 2.0, DEFAULT_THRESHOLDS)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    pos_sorted = np.sort(pair_d[pair_y])
    neg_sorted = np.sort(pair_d[~pair_y])
    tp = np.searchsorted(pos_sorted, thresholds, side="left").astype(np.float64)
    fp = np.searchsorted(neg_sorted, thresholds, side="left").astype(np.float64)
    predicted = tp + fp
    precision = np.where(predicted > 0, tp / np.maximum(predicted, 1.0), 1.0)
    recall = tp / n_pos
    return PrCurve(thresholds, precision, recall)


def auc(curve: PrCurve) -> float:
    """Trapezoidal area under the precision/recall curve.

    Duplicate recalls collapse to their maximum precision; the curve is
    extended to recall 0 carrying the first precision. No extension past
    the largest achieved recall.
    """
    best: dict[float, float] = {}
    for r, p in zip(curve.recalls, curve.precisions):
        r = float(r)
        if r not in best or p > best[r]:
            best[r] = float(p)
    rs = sorted(best)
    ps = [best[r] for r in rs]
    if rs[0] > 0.0:
        rs.insert(0, 0.0)
        ps.insert(0, ps[0])
    area = 0.0
    for i in range(len(rs) - 1):
        area += 0.5 * (rs[i + 1] - rs[i]) * (ps[i + 1] + ps[i])
    return area


def recall_at_precision(curve: PrCurve, target: float = 0.95) -> float:
    """Maximum recall among sweep points with precision >= target; 0 if none."""
    ok = curve.precisions >= target
    return float(curve.recalls[ok].max()) if ok.any() else 0.0


def f1_optimal(curve: PrCurve) -> tuple[float, float, float]:
    """(threshold, precision, recall) maximizing F1; ties go to the lowest threshold."""
    p, r = curve.precisions, curve.recalls
    denom = p + r
    f1 = np.where(denom > 0, 2.0 * p * r / np.maximum(denom, 1e-300), 0.0)
    idx = int(np.argmax(f1))
    return float(curve.thresholds[idx]), float(p[idx]), float(r[idx])


# ---------------------------------------------------------------------------
# Nearest-neighbor retrieval
# ---------------------------------------------------------------------------


def nearest_neighbor(
    query_id: int,
    ids: Sequence[int],
    descriptors,
    timestamps: np.ndarray,
    s_seconds: float,
) -> int:
    """Exhaustive nearest neighbor outside the temporal exclusion window.

    Only records with |t - t_query| > s_seconds are candidates (s = 0
    still excludes the query itself). Distance ties go to the lowest id.
    """
    ids = list(ids)
    v = as_matrix(descriptors)
    timestamps = np.asarray(timestamps, dtype=np.float64)
    try:
        qi = ids.index(query_id)
    except ValueError:
        raise ValidationError(f"query id {query_id} not present") from None
    d = np.clip(1.0 - v @ v[qi], 0.0, 2.0)
    mask = np.abs(timestamps - timestamps[qi]) > s_seconds
    if not mask.any():
        raise ValidationError(f"exclusion window {s_seconds}s removes every record")
    dmin = d[mask].min()
    winners = [ids[j] for j in np.flatnonzero(mask & (d == dmin))]
    return min(winners)


def precision_over_overlap(
    manifest: DatasetManifest,
    descriptors,
    s_seconds: float,
    overlap_thresholds: Sequence[float] = DEFAULT_OVERLAP_LEVELS,
    n_arc: int = DEFAULT_N_ARC,
) -> list[tuple[float, float]]:
    """Fraction of records whose nearest neighbor shares enough FOV overlap.

    For every record, the nearest neighbor outside the exclusion window is
    retrieved and the FOV overlap between the two poses computed; each
    threshold reports the fraction of records at or above it. Fractions
    are non-increasing across thresholds by construction.
    """
    records = manifest.records
    v = as_matrix(descriptors)
    if v.shape[0] != len(records):
        raise ValidationError("descriptor count does not match manifest records")
    ids = np.array([r.id for r in records])
    t = np.array([r.pose.t for r in records])
    d = distance_matrix(v)
    overlaps = np.empty(len(records))
    for qi in range(len(records)):
        mask = np.abs(t - t[qi]) > s_seconds
        if not mask.any():
            raise ValidationError(f"exclusion window {s_seconds}s removes every record")
        row = d[qi]
        dmin = row[mask].min()
        candidates = np.flatnonzero(mask & (row == dmin))
        j = int(candidates[np.argmin(ids[candidates])])
        overlaps[qi] = fov_overlap(records[qi].pose, records[j].pose, manifest.config, n_arc)
    return [(float(th), float(np.mean(overlaps >= th))) for th in overlap_thresholds]


# ---------------------------------------------------------------------------
# 2-D projection export (classical MDS)
# ---------------------------------------------------------------------------


def mds_2d(descriptors) -> np.ndarray:
    """Classical MDS of the cosine-distance matrix onto 2 dimensions.

    Double-centers the squared distances, takes the top-2 eigenpairs, and
    scales eigenvectors by sqrt(max(eigenvalue, 0)). Each output column is
    sign-canonicalized (its largest-magnitude entry is made positive) so
    the embedding is deterministic.
    """
    d = distance_matrix(descriptors)
    n = d.shape[0]
    j = np.eye(n) - np.full((n, n), 1.0 / n)
    b = -0.5 * j @ (d * d) @ j
    evals, evecs = np.linalg.eigh(b)
    coords = np.zeros((n, 2))
    for k, idx in enumerate((n - 1, n - 2)):
        if idx < 0:
            continue
        scale = math.sqrt(max(float(evals[idx]), 0.0))
        col = evecs[:, idx] * scale
        pivot = int(np.argmax(np.abs(col)))
        if col[pivot] < 0:
            col = -col
        coords[:, k] = col
    return coords


# ---------------------------------------------------------------------------
# Delimited output
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def _write_lines(path: str | os.PathLike, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_pr_curve_csv(curve: PrCurve, path: str | os.PathLike) -> None:
    lines = ["threshold,precision,recall"]
    for t, p, r in zip(curve.thresholds, curve.precisions, curve.recalls):
        lines.append(f"{_fmt(t)},{_fmt(p)},{_fmt(r)}")
    _write_lines(path, lines)


def write_summary_csv(
    path: str | os.PathLike,
    auc_value: float,
    r_at_95p: float,
    f1_point: tuple[float, float, float],
) -> None:
    lines = [
        "auc,r_at_95p,f1_threshold,f1_precision,f1_recall",
        ",".join(_fmt(x) for x in (auc_value, r_at_95p, *f1_point)),
    ]
    _write_lines(path, lines)


def write_overlap_precision_csv(
    fractions: Sequence[tuple[float, float]], path: str | os.PathLike
) -> None:
    lines = ["threshold,fraction"]
    for th, frac in fractions:
        lines.append(f"{_fmt(th)},{_fmt(frac)}")
    _write_lines(path, lines)


def write_descriptors_2d_csv(
    ids: Sequence[int], coords: np.ndarray, path: str | os.PathLike
) -> None:
    lines = ["id,x,y"]
    for rid, (x, y) in zip(ids, coords):
        lines.append(f"{rid},{_fmt(x)},{_fmt(y)}")
    _write_lines(path, lines)


def write_overlap_csv(
    manifest: DatasetManifest,
    overlaps: np.ndarray,
    path: str | os.PathLike,
    tau: float = DEFAULT_OVERLAP_TAU,
    max_heading_diff: float = DEFAULT_MAX_HEADING_DIFF,
) -> None:
    """Pairwise overlap export: one row per unordered record pair."""
    records = manifest.records
    lines = ["row_id,col_id,overlap,is_positive"]
    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            heading_ok = (
                abs(wrap_angle(records[i].pose.heading - records[j].pose.heading))
                <= max_heading_diff
            )
            positive = int(heading_ok and overlaps[i, j] >= tau)
            lines.append(
                f"{records[i].id},{records[j].id},{_fmt(overlaps[i, j])},{positive}"
            )
    _write_lines(path, lines)


def align_descriptors(
    manifest: DatasetManifest, ids: Sequence[int], vectors: np.ndarray
) -> np.ndarray:
    """Reorder a loaded descriptor set to the manifest's record order."""
    by_id = {rid: i for i, rid in enumerate(ids)}
    rows = []
    for r in manifest.records:
        if r.id not in by_id:
            raise ValidationError(f"descriptor db is missing record id {r.id}")
        rows.append(vectors[by_id[r.id]])
    return np.stack(rows)
