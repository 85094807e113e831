"""Independent reference implementations used to check the library.

Everything here is written for clarity over speed and shares no code
with the package: naive per-cell CFAR, grid-counting rasterization of
sector overlap, loop-based convolution, and per-block Haar formulas.
"""

from __future__ import annotations

import math

import numpy as np


def naive_cfar(data: np.ndarray, mode: str, n_w: int, p_fa: float, guard: int) -> np.ndarray:
    """Per-cell CFAR recomputing each window mean from scratch.

    For every range cell: the leading window is the n_w cells ending
    guard + 1 cells before it, the trailing window the n_w cells starting
    guard + 1 cells after it. Cells with both windows combine them with
    min (smallest-of) or max (greatest-of); cells near an edge use the
    single available window. Output is 1.0 where the cell exceeds alpha
    times the statistic. Window sums are recomputed from scratch at every
    cell index; beams share the edge logic, so each recomputation covers
    all beams at once.
    """
    alpha = n_w * (p_fa ** (-1.0 / n_w) - 1.0)
    n_beams, n_bins = data.shape
    out = np.zeros_like(data)
    for c in range(n_bins):
        lead_start = c - guard - n_w
        trail_end = c + guard + n_w
        lead = data[:, lead_start : c - guard].sum(axis=1) / n_w if lead_start >= 0 else None
        trail = (
            data[:, c + guard + 1 : trail_end + 1].sum(axis=1) / n_w
            if trail_end <= n_bins - 1
            else None
        )
        if lead is not None and trail is not None:
            stat = np.minimum(lead, trail) if mode == "soca" else np.maximum(lead, trail)
        elif lead is not None:
            stat = lead
        else:
            stat = trail
        out[:, c] = np.where(data[:, c] > alpha * stat, 1.0, 0.0)
    return out


def _wedge_half_planes(pose_x, pose_y, heading, aperture):
    """Inward normals of the two rays bounding a sector of aperture <= pi.

    A point q is inside the wedge iff cross(u_lo, q - apex) >= 0 and
    cross(u_hi, q - apex) <= 0, with u_lo / u_hi the boundary ray
    directions.
    """
    lo = heading - aperture / 2.0
    hi = heading + aperture / 2.0
    return (math.cos(lo), math.sin(lo)), (math.cos(hi), math.sin(hi))


def _column_interval(xs, apex, u, sense):
    """Per-column y-interval bounds for cross(u, q - apex) * sense >= 0.

    Returns (lo, hi) arrays; columns constrained only in x get an empty
    interval encoded as lo = +inf when they fail.
    """
    ax, ay = apex
    ux, uy = u
    dx = xs - ax
    lo = np.full_like(xs, -np.inf)
    hi = np.full_like(xs, np.inf)
    # cross(u, d) = ux * dy - uy * dx; the constraint is sense * cross >= 0
    if ux * sense > 0:
        lo = ay + (uy / ux) * dx
    elif ux * sense < 0:
        hi = ay + (uy / ux) * dx
    else:
        bad = (-uy * dx) * sense < 0
        lo = np.where(bad, np.inf, lo)
    return lo, hi


def _sector_column_bounds(xs, pose, max_range, aperture):
    """y-interval of the true circular sector over each column."""
    dx = xs - pose[0]
    inside = np.abs(dx) <= max_range
    half = np.sqrt(np.maximum(max_range**2 - dx**2, 0.0))
    lo = np.where(inside, pose[1] - half, np.inf)
    hi = np.where(inside, pose[1] + half, -np.inf)
    u_lo, u_hi = _wedge_half_planes(pose[0], pose[1], pose[2], aperture)
    for u, sense in ((u_lo, 1.0), (u_hi, -1.0)):
        l2, h2 = _column_interval(xs, (pose[0], pose[1]), u, sense)
        lo = np.maximum(lo, l2)
        hi = np.minimum(hi, h2)
    return lo, hi


def _grid_count(lo, hi, step):
    """Number of y grid points (multiples of step) inside [lo, hi] per column."""
    lo_idx = np.ceil(lo / step - 1e-9)
    hi_idx = np.floor(hi / step + 1e-9)
    return np.maximum(hi_idx - lo_idx + 1, 0.0)


def raster_overlap(pose1, pose2, max_range: float, aperture: float, step: float = 0.005) -> float:
    """FOV overlap by counting 0.005 m grid points, column by column.

    Both sectors are convex (aperture <= pi), so each column of the grid
    meets a sector, and the intersection, in one contiguous run of
    points; counting runs column-wise is identical to rasterizing the
    full 2-D grid. Poses are (x, y, heading) triples. Returns
    |S1 n S2| / |S1| measured in grid points.
    """
    x_min = min(pose1[0], pose2[0]) - max_range
    x_max = max(pose1[0], pose2[0]) + max_range
    k0 = math.ceil(x_min / step)
    k1 = math.floor(x_max / step)
    xs = np.arange(k0, k1 + 1, dtype=np.float64) * step
    lo1, hi1 = _sector_column_bounds(xs, pose1, max_range, aperture)
    lo2, hi2 = _sector_column_bounds(xs, pose2, max_range, aperture)
    area1 = _grid_count(lo1, hi1, step).sum()
    inter = _grid_count(np.maximum(lo1, lo2), np.minimum(hi1, hi2), step).sum()
    if area1 == 0:
        raise ValueError("first sector rasterized to zero points")
    return float(inter / area1)


def naive_conv_stage(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, stride: int) -> np.ndarray:
    """Direct-loop strided convolution with zero padding kernel // 2, no ReLU."""
    in_c, h, w = x.shape
    out_c, in_c2, k, _ = kernel.shape
    assert in_c == in_c2
    pad = k // 2
    oh = -(-h // stride)
    ow = -(-w // stride)
    xp = np.zeros((in_c, h + 2 * pad, w + 2 * pad))
    xp[:, pad : pad + h, pad : pad + w] = x
    out = np.zeros((out_c, oh, ow))
    for oc in range(out_c):
        for oy in range(oh):
            for ox in range(ow):
                acc = bias[oc]
                for ic in range(in_c):
                    for ky in range(k):
                        for kx in range(k):
                            acc += kernel[oc, ic, ky, kx] * xp[ic, oy * stride + ky, ox * stride + kx]
                out[oc, oy, ox] = acc
    return out


def haar_block_forward(x: np.ndarray):
    """Single-level 2-D Haar by explicit per-2x2-block formulas."""
    a = x[0::2, 0::2]
    b = x[0::2, 1::2]
    c = x[1::2, 0::2]
    d = x[1::2, 1::2]
    ll = (a + b + c + d) / 2.0
    lh = (a - b + c - d) / 2.0
    hl = (a + b - c - d) / 2.0
    hh = (a - b - c + d) / 2.0
    return ll, lh, hl, hh


def pair_counts(distances: np.ndarray, labels: np.ndarray, threshold: float):
    """Brute-force TP / FP / FN over already-flattened unordered pairs."""
    pred = distances < threshold
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    return tp, fp, fn


def shoelace(points: np.ndarray) -> float:
    """Polygon area by the classic signed-sum formula (absolute value)."""
    x = points[:, 0]
    y = points[:, 1]
    return abs(float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))) / 2.0
