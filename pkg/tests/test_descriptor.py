"""Encoder architecture, resize, random projection, descriptor files."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sonarplace.core import (
    DESCRIPTOR_DIM,
    Descriptor,
    FormatError,
    SonarConfig,
    SonarImage,
    ValidationError,
)
from sonarplace.descriptor import (
    DegenerateDescriptorWarning,
    EncoderParams,
    EncoderWeights,
    RgpMatrix,
    conv_stage_forward,
    cosine_distance,
    describe,
    describe_array,
    encoder_forward,
    extract_features,
    init_encoder,
    load_descriptor_db,
    load_weights,
    resize_array,
    resize_image,
    rgp_project,
    save_descriptor_db,
    save_weights,
)

from oracles import naive_conv_stage


def _unit(rng, dim=DESCRIPTOR_DIM):
    v = rng.normal(size=dim)
    return Descriptor(v / np.linalg.norm(v))


class TestEncoderParams:
    def test_default_architecture(self):
        p = EncoderParams()
        assert p.stage_shapes() == [(8, 128, 100), (16, 64, 50), (32, 32, 25)]
        assert p.feature_length == 32 * 32 * 25

    def test_ceil_division_on_odd_sizes(self):
        p = EncoderParams(input_h=7, input_w=5, channel_widths=(4, 4))
        assert p.stage_shapes() == [(4, 4, 3), (4, 2, 2)]

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"input_h": 1},
            {"input_w": 1},
            {"channel_widths": ()},
            {"channel_widths": (8, 0)},
            {"kernel": 4},
            {"kernel": -1},
            {"stride_per_stage": 0},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValidationError):
            EncoderParams(**kwargs)


class TestInitEncoder:
    def test_shapes_and_zero_bias(self):
        p = EncoderParams(input_h=16, input_w=16, channel_widths=(4, 6), kernel=3)
        w = init_encoder(p)
        assert w.kernels[0].shape == (4, 1, 3, 3)
        assert w.kernels[1].shape == (6, 4, 3, 3)
        assert w.biases[0].shape == (4,)
        np.testing.assert_array_equal(w.biases[0], 0.0)
        np.testing.assert_array_equal(w.biases[1], 0.0)

    def test_he_scale(self):
        # large fan-out so the sample std is tight around sqrt(2 / fan_in)
        p = EncoderParams(input_h=16, input_w=16, channel_widths=(512,), kernel=3)
        w = init_encoder(p)
        std = w.kernels[0].std()
        assert std == pytest.approx(math.sqrt(2.0 / 9.0), rel=0.1)

    def test_seed_determinism(self):
        p1 = EncoderParams(input_h=8, input_w=8, seed=7)
        a = init_encoder(p1)
        b = init_encoder(p1)
        c = init_encoder(EncoderParams(input_h=8, input_w=8, seed=8))
        for ka, kb in zip(a.kernels, b.kernels):
            np.testing.assert_array_equal(ka, kb)
        assert not np.array_equal(a.kernels[0], c.kernels[0])

    def test_parameter_count(self):
        p = EncoderParams(channel_widths=(8, 16, 32), kernel=3)
        w = init_encoder(p)
        expected = (8 * 1 * 9 + 8) + (16 * 8 * 9 + 16) + (32 * 16 * 9 + 32)
        assert w.n_parameters == expected

    def test_weights_shape_validation(self):
        p = EncoderParams(channel_widths=(4,))
        w = init_encoder(p)
        with pytest.raises(ValidationError):
            EncoderWeights(p, (w.kernels[0][:, :, :2, :2],), w.biases)
        bad = (np.full_like(w.kernels[0], np.nan),)
        with pytest.raises(ValidationError):
            EncoderWeights(p, bad, w.biases)

    def test_copy_is_deep(self):
        w = init_encoder(EncoderParams(channel_widths=(4,)))
        c = w.copy()
        c.kernels[0][...] += 1.0
        assert not np.array_equal(c.kernels[0], w.kernels[0])


class TestResize:
    def test_identity_when_same_size(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(size=(6, 9))
        np.testing.assert_allclose(resize_array(x, 6, 9), x, atol=1e-12)

    def test_corners_align(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(size=(5, 7))
        y = resize_array(x, 11, 13)
        assert y[0, 0] == pytest.approx(x[0, 0])
        assert y[0, -1] == pytest.approx(x[0, -1])
        assert y[-1, 0] == pytest.approx(x[-1, 0])
        assert y[-1, -1] == pytest.approx(x[-1, -1])

    def test_bilinear_midpoints(self):
        x = np.array([[0.0, 1.0], [1.0, 0.0]])
        y = resize_array(x, 3, 3)
        # centers of edges average the two endpoints; center averages all four
        assert y[0, 1] == pytest.approx(0.5)
        assert y[1, 0] == pytest.approx(0.5)
        assert y[1, 1] == pytest.approx(0.5)

    def test_constant_preserved(self):
        x = np.full((4, 10), 0.37)
        y = resize_array(x, 17, 3)
        np.testing.assert_allclose(y, 0.37, atol=1e-12)

    def test_output_clipped(self):
        x = np.array([[0.0, 1.0], [1.0, 1.0]])
        y = resize_array(x, 5, 5)
        assert y.min() >= 0.0 and y.max() <= 1.0

    def test_too_small_input(self):
        with pytest.raises(ValidationError):
            resize_array(np.zeros((1, 5)), 4, 4)

    def test_resize_image_wrapper(self):
        config = SonarConfig(30.0, 2.0, 4, 8)
        img = SonarImage(config, np.random.default_rng(0).uniform(size=(4, 8)))
        assert resize_image(img, 6, 6).shape == (6, 6)


class TestConvForward:
    @pytest.mark.parametrize("stride", [1, 2, 3])
    @pytest.mark.parametrize("kernel", [1, 3, 5])
    def test_matches_naive_oracle(self, stride, kernel):
        rng = np.random.default_rng(kernel * 10 + stride)
        x = rng.normal(size=(3, 7, 6))
        kern = rng.normal(size=(4, 3, kernel, kernel))
        bias = rng.normal(size=4)
        z, _ = conv_stage_forward(x, kern, bias, stride)
        np.testing.assert_allclose(z, naive_conv_stage(x, kern, bias, stride), atol=1e-10)

    def test_full_stack_matches_naive(self):
        p = EncoderParams(input_h=6, input_w=6, channel_widths=(3, 5), kernel=3)
        w = init_encoder(p)
        rng = np.random.default_rng(3)
        x = rng.uniform(size=(6, 6))
        features, _ = encoder_forward(x, w)
        a = x[None]
        for kern, bias in zip(w.kernels, w.biases):
            a = np.maximum(naive_conv_stage(a, kern, bias, p.stride_per_stage), 0.0)
        np.testing.assert_allclose(features, a.reshape(-1), atol=1e-10)
        assert features.shape == (p.feature_length,)

    def test_input_shape_enforced(self):
        w = init_encoder(EncoderParams(input_h=8, input_w=8, channel_widths=(2,)))
        with pytest.raises(ValidationError):
            encoder_forward(np.zeros((8, 9)), w)

    def test_relu_nonnegative(self):
        w = init_encoder(EncoderParams(input_h=8, input_w=8, channel_widths=(4, 4)))
        f = extract_features(np.random.default_rng(0).uniform(size=(8, 8)), w)
        assert f.min() >= 0.0


class TestRgp:
    def test_shape_and_determinism(self):
        m1 = RgpMatrix(seed=5, cols=300)
        m2 = RgpMatrix(seed=5, cols=300)
        m3 = RgpMatrix(seed=6, cols=300)
        assert m1.entries.shape == (DESCRIPTOR_DIM, 300)
        np.testing.assert_array_equal(m1.entries, m2.entries)
        assert not np.array_equal(m1.entries, m3.entries)

    def test_entries_frozen(self):
        m = RgpMatrix(seed=0, cols=10)
        with pytest.raises(ValueError):
            m.entries[0, 0] = 1.0

    def test_entry_scale(self):
        m = RgpMatrix(seed=1, cols=4096)
        assert m.entries.std() == pytest.approx(math.sqrt(1.0 / DESCRIPTOR_DIM), rel=0.05)

    def test_project_length_check(self):
        m = RgpMatrix(seed=0, cols=10)
        with pytest.raises(ValidationError):
            rgp_project(np.zeros(11), m)

    def test_distance_preservation(self):
        """Johnson-Lindenstrauss sanity: pair distances survive projection."""
        rng = np.random.default_rng(42)
        m = RgpMatrix(seed=0, cols=2048)
        ratios = []
        for _ in range(200):
            x = rng.normal(size=2048)
            y = rng.normal(size=2048)
            num = np.linalg.norm(rgp_project(x, m) - rgp_project(y, m))
            ratios.append(num / np.linalg.norm(x - y))
        ratios = np.asarray(ratios)
        assert np.mean((ratios >= 0.65) & (ratios <= 1.35)) >= 0.95


class TestDescribe:
    def _setup(self, seed=0, h=8, w=8):
        params = EncoderParams(input_h=h, input_w=w, channel_widths=(4, 4), seed=seed)
        weights = init_encoder(params)
        matrix = RgpMatrix(seed=1, cols=params.feature_length)
        return params, weights, matrix

    def test_unit_norm(self):
        _, weights, matrix = self._setup()
        d = describe_array(np.random.default_rng(0).uniform(size=(8, 8)), weights, matrix)
        assert np.linalg.norm(d.values) == pytest.approx(1.0, abs=1e-12)

    def test_zero_image_falls_back_with_warning(self):
        # zero input, zero biases: every feature is zero, projection is zero
        _, weights, matrix = self._setup()
        with pytest.warns(DegenerateDescriptorWarning):
            d = describe_array(np.zeros((8, 8)), weights, matrix)
        expected = np.zeros(DESCRIPTOR_DIM)
        expected[0] = 1.0
        np.testing.assert_array_equal(d.values, expected)

    def test_full_pipeline_deterministic(self):
        config = SonarConfig(30.0, 2.0, 16, 32)
        img = SonarImage(config, np.random.default_rng(7).uniform(size=(16, 32)))
        _, weights, matrix = self._setup()
        a = describe(img, weights, matrix)
        b = describe(img, weights, matrix)
        np.testing.assert_array_equal(a.values, b.values)

    def test_near_duplicate_stability(self):
        """Noise up to 0.01 in image space moves the descriptor less than 0.1."""
        config = SonarConfig(30.0, 2.0, 16, 32)
        rng = np.random.default_rng(3)
        base = rng.uniform(0.05, 0.95, size=(16, 32))
        _, weights, matrix = self._setup(h=16, w=16)
        d0 = describe(SonarImage(config, base), weights, matrix)
        for k in range(10):
            noisy = np.clip(base + rng.uniform(-0.01, 0.01, size=base.shape), 0.0, 1.0)
            dk = describe(SonarImage(config, noisy), weights, matrix)
            assert cosine_distance(d0, dk) < 0.1


class TestCosineDistance:
    def test_identities_exact_on_basis_vectors(self):
        e = np.eye(DESCRIPTOR_DIM)
        e1, e2 = Descriptor(e[0]), Descriptor(e[1])
        assert cosine_distance(e1, e1) == 0.0
        assert cosine_distance(e1, Descriptor(-e[0])) == 2.0
        assert cosine_distance(e1, e2) == 1.0

    def test_identities_on_random_vectors(self):
        rng = np.random.default_rng(0)
        x = _unit(rng)
        assert cosine_distance(x, x) == pytest.approx(0.0, abs=1e-12)
        assert cosine_distance(x, Descriptor(-x.values)) == pytest.approx(2.0, abs=1e-12)
        y = _unit(rng).values.copy()
        y -= np.dot(y, x.values) * x.values
        y /= np.linalg.norm(y)
        assert cosine_distance(x, Descriptor(y)) == pytest.approx(1.0, abs=1e-12)

    def test_euclidean_identity(self):
        """For unit vectors, squared euclidean distance is twice the cosine distance."""
        rng = np.random.default_rng(1)
        for _ in range(50):
            x, y = _unit(rng), _unit(rng)
            d = cosine_distance(x, y)
            assert np.sum((x.values - y.values) ** 2) == pytest.approx(2.0 * d, abs=1e-6)


class TestWeightsFile:
    def test_round_trip_exact(self, tmp_path):
        p = EncoderParams(input_h=12, input_w=10, channel_widths=(3, 5), kernel=5, seed=-4)
        w = init_encoder(p)
        w.biases[0][...] = np.arange(3, dtype=np.float64)
        path = tmp_path / "w.senc"
        save_weights(w, path)
        back = load_weights(path)
        assert back.params == p
        for ka, kb in zip(back.kernels, w.kernels):
            np.testing.assert_array_equal(ka, kb)
        for ba, bb in zip(back.biases, w.biases):
            np.testing.assert_array_equal(ba, bb)

    def test_write_read_write_stable(self, tmp_path):
        w = init_encoder(EncoderParams(input_h=8, input_w=8, channel_widths=(2, 3)))
        p1, p2 = tmp_path / "a.senc", tmp_path / "b.senc"
        save_weights(w, p1)
        save_weights(load_weights(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "w.senc"
        w = init_encoder(EncoderParams(channel_widths=(2,)))
        save_weights(w, path)
        blob = bytearray(path.read_bytes())
        blob[0] = ord("X")
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError) as err:
            load_weights(path)
        assert err.value.byte_offset == 0

    def test_truncation_reports_offset(self, tmp_path):
        path = tmp_path / "w.senc"
        save_weights(init_encoder(EncoderParams(channel_widths=(2, 2))), path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 5])
        with pytest.raises(FormatError) as err:
            load_weights(path)
        assert err.value.byte_offset is not None

    def test_loaded_weights_are_writable(self, tmp_path):
        # training updates arrays in place, so loads must not alias the blob
        path = tmp_path / "w.senc"
        save_weights(init_encoder(EncoderParams(channel_widths=(2,))), path)
        w = load_weights(path)
        w.kernels[0][...] -= 0.5
        w.biases[0][...] += 1.0


class TestDescriptorDb:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        ids = [3, 11, 42]
        descs = [_unit(rng) for _ in ids]
        path = tmp_path / "d.sdpr"
        save_descriptor_db(path, ids, descs, rgp_seed=9, encoder_seed=-2)
        back_ids, vectors, rgp_seed, encoder_seed = load_descriptor_db(path)
        assert back_ids == ids
        assert rgp_seed == 9
        assert encoder_seed == (-2) & ((1 << 64) - 1)
        for row, d in zip(vectors, descs):
            assert np.linalg.norm(row) == pytest.approx(1.0, abs=1e-12)
            # f32 round-trip: about 7 significant digits survive
            np.testing.assert_allclose(row, d.values, atol=1e-6)

    def test_length_mismatch(self, tmp_path):
        rng = np.random.default_rng(0)
        with pytest.raises(ValidationError):
            save_descriptor_db(tmp_path / "d.sdpr", [1, 2], [_unit(rng)], 0, 0)

    def test_size_mismatch_detected(self, tmp_path):
        rng = np.random.default_rng(0)
        path = tmp_path / "d.sdpr"
        save_descriptor_db(path, [1], [_unit(rng)], 0, 0)
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(FormatError):
            load_descriptor_db(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "d.sdpr"
        path.write_bytes(b"XXXX" + b"\0" * 60)
        with pytest.raises(FormatError) as err:
            load_descriptor_db(path)
        assert err.value.byte_offset == 0

    def test_zero_vector_rejected(self, tmp_path):
        import struct

        path = tmp_path / "d.sdpr"
        header = struct.pack("<4sIIIQQ", b"SDPR", 1, 1, DESCRIPTOR_DIM, 0, 0)
        record = struct.pack("<I", 1) + np.zeros(DESCRIPTOR_DIM, dtype="<f4").tobytes()
        path.write_bytes(header + record)
        with pytest.raises(FormatError):
            load_descriptor_db(path)


class Test200CaseProperties:
    """Seeded 200-case suites for the stated invariants."""

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_descriptor_unit_norm(self, seed):
        params = EncoderParams(input_h=6, input_w=6, channel_widths=(3,), seed=0)
        weights = init_encoder(params)
        matrix = RgpMatrix(seed=1, cols=params.feature_length)
        x = np.random.default_rng(seed).uniform(0.05, 1.0, size=(6, 6))
        d = describe_array(x, weights, matrix)
        assert np.linalg.norm(d.values) == pytest.approx(1.0, abs=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_euclidean_cosine_identity(self, seed):
        rng = np.random.default_rng(seed)
        x, y = _unit(rng), _unit(rng)
        d = cosine_distance(x, y)
        assert abs(float(np.sum((x.values - y.values) ** 2)) - 2.0 * d) < 1e-6

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_describe_deterministic(self, seed):
        params = EncoderParams(input_h=6, input_w=6, channel_widths=(3,), seed=2)
        weights = init_encoder(params)
        matrix = RgpMatrix(seed=3, cols=params.feature_length)
        x = np.random.default_rng(seed).uniform(0.05, 1.0, size=(6, 6))
        a = describe_array(x, weights, matrix)
        b = describe_array(x, weights, matrix)
        np.testing.assert_array_equal(a.values, b.values)
