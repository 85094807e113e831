"""Sector polygons, convex clipping, FOV overlap, positive-pair rule."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sonarplace.core import Pose2D, SonarConfig, ValidationError, derive_rng
from sonarplace.geometry import (
    convex_clip,
    convex_intersection_area,
    fov_overlap,
    is_positive_pair,
    polygon_area,
    sector_area,
    sector_polygon,
)

from oracles import raster_overlap, shoelace

CONFIG = SonarConfig(max_range_m=30.0, aperture_rad=math.radians(120.0), n_beams=16, n_bins=64)


def _pose(x, y, heading, t=0.0):
    return Pose2D(float(x), float(y), float(heading), float(t))


class TestSectorPolygon:
    def test_vertex_count_and_apex(self):
        pose = _pose(2.0, -1.0, 0.5)
        poly = sector_polygon(pose, CONFIG, n_arc=16)
        assert poly.shape == (18, 2)
        np.testing.assert_allclose(poly[0], [2.0, -1.0])

    def test_arc_points_on_circle(self):
        pose = _pose(3.0, 4.0, -1.2)
        poly = sector_polygon(pose, CONFIG, n_arc=32)
        radii = np.hypot(poly[1:, 0] - 3.0, poly[1:, 1] - 4.0)
        np.testing.assert_allclose(radii, CONFIG.max_range_m, rtol=1e-12)

    def test_counterclockwise_signed_area(self):
        poly = sector_polygon(_pose(0, 0, 0.3), CONFIG, n_arc=12)
        x, y = poly[:, 0], poly[:, 1]
        signed = float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)) / 2.0
        assert signed > 0

    def test_area_matches_inscribed_formula(self):
        poly = sector_polygon(_pose(1, 2, 0.7), CONFIG, n_arc=64)
        expected = sector_area(CONFIG, n_arc=64)
        assert polygon_area(poly) == pytest.approx(expected, rel=1e-12)
        formula = 0.5 * 64 * CONFIG.max_range_m**2 * math.sin(CONFIG.aperture_rad / 64)
        assert expected == pytest.approx(formula, rel=1e-12)

    def test_polygon_area_matches_shoelace_oracle(self):
        poly = sector_polygon(_pose(-4, 9, 2.0), CONFIG, n_arc=20)
        assert polygon_area(poly) == pytest.approx(shoelace(poly), rel=1e-12)

    def test_min_arc_segments(self):
        with pytest.raises(ValidationError):
            sector_polygon(_pose(0, 0, 0), CONFIG, n_arc=7)


class TestConvexClip:
    SQUARE = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]])

    def test_identical_squares(self):
        out = convex_clip(self.SQUARE, self.SQUARE)
        assert polygon_area(out) == pytest.approx(4.0)

    def test_offset_squares(self):
        other = self.SQUARE + [1.0, 1.0]
        out = convex_clip(self.SQUARE, other)
        assert polygon_area(out) == pytest.approx(1.0)

    def test_disjoint_empty(self):
        other = self.SQUARE + [5.0, 0.0]
        out = convex_clip(self.SQUARE, other)
        assert out.shape[0] == 0

    def test_contained_polygon(self):
        inner = self.SQUARE * 0.25 + [0.5, 0.5]
        assert convex_intersection_area(self.SQUARE, inner) == pytest.approx(0.25)

    def test_triangle_square_known_area(self):
        # triangle {x >= 1, y >= x - 2, y <= 4 - x} meets the square in [1,2] x [0,2]
        tri = np.array([[1.0, -1.0], [3.0, 1.0], [1.0, 3.0]])
        area = convex_intersection_area(self.SQUARE, tri)
        assert area == pytest.approx(2.0, rel=1e-12)


class TestFovOverlap:
    def test_identical_poses_full_overlap(self):
        p = _pose(1.0, 2.0, 0.4)
        assert fov_overlap(p, p, CONFIG) == pytest.approx(1.0, abs=1e-12)

    def test_far_apart_zero(self):
        assert fov_overlap(_pose(0, 0, 0), _pose(100, 0, 0), CONFIG) == 0.0

    def test_beyond_reach_shortcut(self):
        # just over 2R: no polygon work needed, exact zero
        assert fov_overlap(_pose(0, 0, 0), _pose(60.001, 0, 0), CONFIG) == 0.0

    def test_matches_raster_oracle_on_seeded_pairs(self):
        rng = derive_rng(2024)
        checked = 0
        for _ in range(12):
            x1, y1 = rng.uniform(-10, 10, 2)
            h1 = rng.uniform(-math.pi, math.pi)
            x2 = x1 + rng.uniform(-20, 20)
            y2 = y1 + rng.uniform(-20, 20)
            h2 = rng.uniform(-math.pi, math.pi)
            p1, p2 = _pose(x1, y1, h1), _pose(x2, y2, h2)
            mine = fov_overlap(p1, p2, CONFIG, n_arc=64)
            ref = raster_overlap(
                (x1, y1, h1), (x2, y2, h2), CONFIG.max_range_m, CONFIG.aperture_rad, step=0.02
            )
            assert abs(mine - ref) < 0.01
            checked += 1
        assert checked == 12

    def test_half_disc_self_test(self):
        """Two opposite half-disc sectors share only a measure-zero edge."""
        cfg = SonarConfig(10.0, math.pi, 4, 8)
        a = fov_overlap(_pose(0, 0, 0), _pose(0, 0, math.pi), cfg, n_arc=256)
        assert a < 0.01

    def test_translation_monotone_along_axis(self):
        vals = [fov_overlap(_pose(0, 0, 0), _pose(d, 0, 0), CONFIG) for d in np.linspace(0, 62, 20)]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
        assert vals[0] == pytest.approx(1.0, abs=1e-12)
        assert vals[-1] == 0.0


class TestIsPositivePair:
    def test_same_pose_positive(self):
        p = _pose(0, 0, 0)
        assert is_positive_pair(p, p, CONFIG)

    def test_heading_gate_applies_before_overlap(self):
        # co-located but facing apart: heading test alone must reject
        a = _pose(0, 0, 0)
        b = _pose(0, 0, math.pi * 0.9)
        assert not is_positive_pair(a, b, CONFIG)

    def test_heading_wrap_across_pi(self):
        a = _pose(0, 0, math.pi - 0.05)
        b = _pose(0, 0, -math.pi + 0.05)
        assert is_positive_pair(a, b, CONFIG)

    def test_tau_threshold_inclusive(self):
        p = _pose(0, 0, 0)
        assert is_positive_pair(p, p, CONFIG, tau=1.0)

    def test_tau_validated(self):
        p = _pose(0, 0, 0)
        with pytest.raises(ValidationError):
            is_positive_pair(p, p, CONFIG, tau=1.5)


class Test200CaseProperties:
    """Seeded 200-case suites for the stated invariants."""

    @settings(max_examples=200, deadline=None)
    @given(
        x1=st.floats(-15, 15), y1=st.floats(-15, 15), h1=st.floats(-3.1, 3.1),
        dx=st.floats(-25, 25), dy=st.floats(-25, 25), h2=st.floats(-3.1, 3.1),
    )
    def test_overlap_symmetric_and_bounded(self, x1, y1, h1, dx, dy, h2):
        p1 = _pose(x1, y1, h1)
        p2 = _pose(x1 + dx, y1 + dy, h2)
        f12 = fov_overlap(p1, p2, CONFIG, n_arc=16)
        f21 = fov_overlap(p2, p1, CONFIG, n_arc=16)
        assert 0.0 <= f12 <= 1.0
        # equal-radius sectors have equal areas: overlap is symmetric
        assert f12 == pytest.approx(f21, abs=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(
        x1=st.floats(-10, 10), y1=st.floats(-10, 10), h1=st.floats(-3.1, 3.1),
        dx=st.floats(-20, 20), dy=st.floats(-20, 20), h2=st.floats(-3.1, 3.1),
        tx=st.floats(-40, 40), ty=st.floats(-40, 40), rot=st.floats(-3.1, 3.1),
    )
    def test_overlap_rigid_motion_invariant(self, x1, y1, h1, dx, dy, h2, tx, ty, rot):
        p1 = _pose(x1, y1, h1)
        p2 = _pose(x1 + dx, y1 + dy, h2)
        base = fov_overlap(p1, p2, CONFIG, n_arc=16)
        c, s = math.cos(rot), math.sin(rot)

        def moved(p):
            rx = c * p.x - s * p.y + tx
            ry = s * p.x + c * p.y + ty
            return _pose(rx, ry, p.heading + rot)

        assert fov_overlap(moved(p1), moved(p2), CONFIG, n_arc=16) == pytest.approx(base, abs=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(
        h=st.floats(-3.1, 3.1),
        d0=st.floats(0, 30), d1=st.floats(0, 30),
        ux=st.floats(-1, 1), uy=st.floats(-1, 1),
    )
    def test_overlap_monotone_in_translation(self, h, d0, d1, ux, uy):
        norm = math.hypot(ux, uy)
        if norm < 1e-6:
            ux, uy, norm = 1.0, 0.0, 1.0
        ux, uy = ux / norm, uy / norm
        near, far = sorted((d0, d1))
        p0 = _pose(0, 0, h)
        f_near = fov_overlap(p0, _pose(near * ux, near * uy, h), CONFIG, n_arc=16)
        f_far = fov_overlap(p0, _pose(far * ux, far * uy, h), CONFIG, n_arc=16)
        assert f_far <= f_near + 1e-9
