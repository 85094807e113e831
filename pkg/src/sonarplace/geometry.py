"""Field-of-view geometry: sector polygons, clipping, and overlap.

A sonar field of view is approximated by a convex polygon: the apex plus
``n_arc`` chords inscribed on the max-range circle. Overlap between two
poses is the area of the polygon intersection (Sutherland-Hodgman)
divided by the sector area, which drives the positive-pair ground truth.
"""

from __future__ import annotations

import math

import numpy as np

from .core import Pose2D, SonarConfig, ValidationError, wrap_angle

DEFAULT_N_ARC = 64
DEFAULT_OVERLAP_TAU = 0.7
DEFAULT_MAX_HEADING_DIFF = math.pi / 2.0


def sector_polygon(pose: Pose2D, config: SonarConfig, n_arc: int = DEFAULT_N_ARC) -> np.ndarray:
    """Inscribed polygon for the field of view at ``pose``.

    Returns an (n_arc + 2, 2) float64 array: the apex followed by
    n_arc + 1 points on the max-range circle, swept from
    heading - aperture/2 to heading + aperture/2. Counter-clockwise and
    convex (aperture <= pi is enforced by SonarConfig).

    The inscribed area is strictly below the true sector area and
    converges to it as n_arc grows; n_arc >= 8 keeps the gap under 1%.
    """
    if n_arc < 8:
        raise ValidationError(f"n_arc must be at least 8, got {n_arc}")
    half = config.aperture_rad / 2.0
    angles = pose.heading + np.linspace(-half, half, n_arc + 1)
    verts = np.empty((n_arc + 2, 2), dtype=np.float64)
    verts[0] = (pose.x, pose.y)
    verts[1:, 0] = pose.x + config.max_range_m * np.cos(angles)
    verts[1:, 1] = pose.y + config.max_range_m * np.sin(angles)
    return verts


def sector_area(config: SonarConfig, n_arc: int = DEFAULT_N_ARC) -> float:
    """Exact area of the inscribed sector polygon.

    n_arc congruent triangles at the apex: (n_arc / 2) * R^2 * sin(aperture / n_arc).
    """
    if n_arc < 8:
        raise ValidationError(f"n_arc must be at least 8, got {n_arc}")
    r = config.max_range_m
    return 0.5 * n_arc * r * r * math.sin(config.aperture_rad / n_arc)


def polygon_area(vertices: np.ndarray) -> float:
    """Unsigned area by the shoelace formula. Fewer than 3 vertices -> 0."""
    v = np.asarray(vertices, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != 2:
        raise ValidationError(f"vertices must have shape (n, 2), got {v.shape}")
    if v.shape[0] < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    return 0.5 * abs(float(cross.sum()))


def convex_clip(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Clip ``subject`` against convex counter-clockwise ``clip`` (Sutherland-Hodgman).

    Points exactly on a clip edge count as inside. Returns an (m, 2) array;
    m may be 0 when the polygons do not intersect.
    """
    subject = np.asarray(subject, dtype=np.float64)
    clip = np.asarray(clip, dtype=np.float64)
    if clip.shape[0] < 3:
        raise ValidationError("clip polygon needs at least 3 vertices")
    output = [tuple(p) for p in subject]
    for i in range(clip.shape[0]):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % clip.shape[0]]
        ex, ey = bx - ax, by - ay
        input_pts = output
        output = []
        prev = input_pts[-1]
        prev_side = ex * (prev[1] - ay) - ey * (prev[0] - ax)
        for cur in input_pts:
            cur_side = ex * (cur[1] - ay) - ey * (cur[0] - ax)
            if cur_side >= 0.0:
                if prev_side < 0.0:
                    output.append(_edge_intersection(prev, cur, prev_side, cur_side))
                output.append(cur)
            elif prev_side >= 0.0:
                output.append(_edge_intersection(prev, cur, prev_side, cur_side))
            prev, prev_side = cur, cur_side
    if not output:
        return np.empty((0, 2), dtype=np.float64)
    return np.asarray(output, dtype=np.float64)


def _edge_intersection(p: tuple, q: tuple, sp: float, sq: float) -> tuple:
    """Point on segment p-q where the clip-edge side value crosses zero."""
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def convex_intersection_area(a: np.ndarray, b: np.ndarray) -> float:
    """Area of the intersection of two convex counter-clockwise polygons."""
    inter = convex_clip(a, b)
    return polygon_area(inter) if inter.shape[0] >= 3 else 0.0


def fov_overlap(
    p1: Pose2D, p2: Pose2D, config: SonarConfig, n_arc: int = DEFAULT_N_ARC
) -> float:
    """Fraction of the first pose's field of view covered by the second's.

    area(sector(p1) intersect sector(p2)) / area(sector(p1)), clamped to
    [0, 1]. Both sectors share one config so the measure is symmetric up
    to floating-point error. Apices farther apart than 2 * max_range_m
    cannot overlap and return 0 without clipping.
    """
    dx, dy = p2.x - p1.x, p2.y - p1.y
    if math.hypot(dx, dy) > 2.0 * config.max_range_m:
        return 0.0
    poly1 = sector_polygon(p1, config, n_arc)
    poly2 = sector_polygon(p2, config, n_arc)
    inter_area = convex_intersection_area(poly1, poly2)
    if inter_area == 0.0:
        return 0.0
    ratio = inter_area / polygon_area(poly1)
    return min(max(ratio, 0.0), 1.0)


def is_positive_pair(
    p1: Pose2D,
    p2: Pose2D,
    config: SonarConfig,
    tau: float = DEFAULT_OVERLAP_TAU,
    max_heading_diff: float = DEFAULT_MAX_HEADING_DIFF,
    n_arc: int = DEFAULT_N_ARC,
) -> bool:
    """Place-recognition ground truth for a pose pair.

    True iff the absolute wrapped heading difference is at most
    ``max_heading_diff`` and the field-of-view overlap is at least ``tau``.
    The heading test runs first so rejected pairs skip the clipping work.
    """
    if not (0.0 <= tau <= 1.0):
        raise ValidationError(f"tau must be in [0, 1], got {tau}")
    if abs(wrap_angle(p1.heading - p2.heading)) > max_heading_diff:
        return False
    return fov_overlap(p1, p2, config, n_arc) >= tau
