"""
Tests for lift.model.
"""

import logging

import numpy as np
import pytest

from lift.errors import ConfigError, DimensionError, ValidationError
from lift.gradcheck import grad_check_params
from lift.model import (
    Descriptor,
    LiftConfig,
    count_params,
    decode_at,
    encode,
    encode_batch,
    encode_graph,
    forward_reconstruct,
    init_params,
    latent_at,
    latent_points,
    param_shapes,
    position_encoding,
    reconstruct_graph,
)
from lift.tensor import Tensor, float64_mode
from lift.training import lift_loss


class TestLiftConfig:
    """Tests for LiftConfig validation."""

    def test_defaults(self):
        c = LiftConfig()
        assert (c.D, c.d, c.layers, c.heads, c.ffn_mult, c.T) == (384, 384, 4, 8, 4, 16)
        assert c.lambda_orth == 0.1

    def test_heads_must_divide_width(self):
        with pytest.raises(ConfigError, match="divisible"):
            LiftConfig(d=30, heads=4)

    def test_negative_lambda(self):
        with pytest.raises(ConfigError):
            LiftConfig(lambda_orth=-0.1)

    def test_zero_layers(self):
        with pytest.raises(ConfigError, match="layers"):
            LiftConfig(layers=0)

    def test_dict_round_trip(self):
        c = LiftConfig(D=12, d=8, layers=1, heads=2)
        assert LiftConfig.from_dict(c.to_dict()) == c


class TestParameters:
    """Tests for parameter shapes, counts and initialization."""

    def test_default_count(self):
        """The full-size model has about 8.7M parameters."""
        n = count_params(LiftConfig())
        assert n == 8_728_320
        assert 8_500_000 <= n <= 8_900_000

    def test_smaller_latent_has_fewer_parameters(self):
        assert count_params(LiftConfig(d=192)) < count_params(LiftConfig(d=384))

    def test_hand_counted_toy(self):
        """
        D=3, d=2, one layer, one head, ffn_mult=2:
        projection 8, tokens 4, layer 54, heads 20, decoder 63.
        """
        config = LiftConfig(D=3, d=2, layers=1, heads=1, ffn_mult=2, T=2)
        assert count_params(config) == 149

    def test_init_is_deterministic(self, toy_config):
        a = init_params(toy_config, seed=7)
        b = init_params(toy_config, seed=7)
        for name in a.tensors:
            assert a.tensors[name].tobytes() == b.tensors[name].tobytes()

    def test_seed_changes_weights(self, toy_config):
        a = init_params(toy_config, seed=1)
        b = init_params(toy_config, seed=2)
        assert not np.array_equal(a.tensors["proj.weight"], b.tensors["proj.weight"])

    def test_layer_norm_gains_are_one(self):
        params = init_params(LiftConfig(D=16, d=32, layers=2, heads=4), seed=0)
        gains = [v for k, v in params.tensors.items() if k.endswith(".gain")]
        assert gains
        assert all(np.array_equal(g, np.ones_like(g)) for g in gains)

    def test_biases_zero_and_shapes_match(self, toy_config, toy_params):
        shapes = param_shapes(toy_config)
        assert {k: v.shape for k, v in toy_params.tensors.items()} == shapes
        assert not np.any(toy_params.tensors["proj.bias"])
        assert toy_params.count() == count_params(toy_config)

    def test_xavier_bound(self, toy_config, toy_params):
        w = toy_params.tensors["proj.weight"]
        fan_in, fan_out = w.shape
        assert np.abs(w).max() <= np.sqrt(6.0 / (fan_in + fan_out))


class TestPositionEncoding:
    """Tests for the sinusoidal frame-index encoding."""

    def test_range(self):
        pe = position_encoding(64, 16)
        assert pe.min() >= -1.0 and pe.max() <= 1.0

    def test_no_collisions(self):
        pe = position_encoding(10_000, 16)
        assert len(np.unique(pe, axis=0)) == 10_000

    def test_interleaved_layout(self):
        pe = position_encoding(1, 4)
        np.testing.assert_allclose(pe[0], [np.sin(1.0), np.cos(1.0), np.sin(0.01), np.cos(0.01)])


class TestEncode:
    """Tests for encode and encode_batch."""

    def test_zero_frames_are_finite_and_repeatable(self, toy_params):
        frames = np.zeros((4, 12), dtype=np.float32)
        a = encode(toy_params, frames)
        b = encode(toy_params, frames)
        assert np.all(np.isfinite(a.vector()))
        assert a.vector().tobytes() == b.vector().tobytes()
        assert a.vector().shape == (16,)

    def test_frame_order_matters(self, toy_params, rng):
        frames = rng.normal(size=(4, 12)).astype(np.float32)
        swapped = frames[[1, 0, 2, 3]]
        assert not np.allclose(encode(toy_params, frames).z_d, encode(toy_params, swapped).z_d)

    def test_batch_matches_single(self, toy_params, rng):
        frames = rng.normal(size=(2, 4, 12)).astype(np.float32)
        batch = encode_batch(toy_params, frames)
        for i in range(2):
            np.testing.assert_allclose(
                batch[i], encode(toy_params, frames[i]).vector(), rtol=1e-5, atol=1e-6
            )

    def test_workers_do_not_change_result(self, toy_params, rng):
        frames = rng.normal(size=(5, 4, 12)).astype(np.float32)
        serial = encode_batch(toy_params, frames, batch_size=2)
        parallel = encode_batch(toy_params, frames, batch_size=2, workers=3)
        assert serial.tobytes() == parallel.tobytes()

    def test_empty_batch(self, toy_params):
        out = encode_batch(toy_params, np.zeros((0, 4, 12), dtype=np.float32))
        assert out.shape == (0, 16)

    def test_batch_encoding_is_logged(self, toy_params, caplog):
        frames = np.zeros((5, 4, 12), dtype=np.float32)
        with caplog.at_level(logging.DEBUG, logger="lift.model"):
            encode_batch(toy_params, frames, batch_size=2)
        assert "encoded 5 videos in 3 batches" in caplog.text

    def test_wrong_width(self, toy_params):
        with pytest.raises(DimensionError):
            encode(toy_params, np.zeros((4, 5), dtype=np.float32))

    def test_wrong_rank(self, toy_params):
        with pytest.raises(DimensionError):
            encode(toy_params, np.zeros(12, dtype=np.float32))

    def test_standardization_applied(self, toy_params, rng):
        """Stored statistics are applied before the projection."""
        frames = rng.normal(size=(4, 12)).astype(np.float32)
        mean = np.full(12, 0.5, dtype=np.float32)
        std = np.full(12, 2.0, dtype=np.float32)
        shifted = toy_params.copy()
        shifted.standardization = (mean, std)
        a = encode(shifted, frames * 2.0 + 0.5).vector()
        b = encode(toy_params, frames).vector()
        np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-5)


class TestDecode:
    """Tests for the linear latent and the decoder."""

    def test_zero_dynamic_is_time_independent(self, toy_params, rng):
        desc = Descriptor(rng.normal(size=8), np.zeros(8))
        first = decode_at(toy_params, desc, 1, 4)
        for t in (2, 3, 4):
            assert decode_at(toy_params, desc, t, 4).tobytes() == first.tobytes()

    def test_last_frame_latent(self, rng):
        desc = Descriptor(rng.normal(size=8), rng.normal(size=8))
        assert latent_at(desc, 4, 4).tobytes() == (desc.z_s + desc.z_d).tobytes()

    def test_collinearity(self, rng):
        """Latent points lie on the line z_s + (t/T)·z_d."""
        desc = Descriptor(rng.normal(size=8), rng.normal(size=8))
        pts = latent_points(desc, 16).astype(np.float64)
        for t1, t2 in [(1, 2), (3, 11), (5, 16)]:
            np.testing.assert_allclose(
                pts[t2 - 1] - pts[t1 - 1], (t2 - t1) / 16 * desc.z_d, atol=1e-6
            )
        centered = pts - pts.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        assert sv[1] < 1e-5 * sv[0]

    def test_collinearity_random_descriptors(self):
        """A hundred random descriptors stay rank-1 up to rounding."""
        gen = np.random.default_rng(7)
        for _ in range(100):
            width = int(gen.integers(2, 65))
            num_frames = int(gen.integers(2, 33))
            scale = 10.0 ** gen.uniform(-3, 3)
            desc = Descriptor(scale * gen.normal(size=width), scale * gen.normal(size=width))
            pts = latent_points(desc, num_frames).astype(np.float64)
            centered = pts - pts.mean(axis=0)
            sv = np.linalg.svd(centered, compute_uv=False)
            assert sv[1:].sum() < 1e-6 * np.linalg.norm(pts)

    def test_frame_index_range(self, toy_params, rng):
        desc = Descriptor(rng.normal(size=8), rng.normal(size=8))
        with pytest.raises(ValidationError):
            decode_at(toy_params, desc, 0, 4)
        with pytest.raises(ValidationError):
            decode_at(toy_params, desc, 5, 4)

    def test_descriptor_lengths_must_agree(self):
        with pytest.raises(ValidationError):
            Descriptor(np.zeros(3), np.zeros(4))

    def test_forward_equals_encode_then_decode(self, toy_params, rng):
        frames = rng.normal(size=(4, 12))
        with float64_mode():
            desc, recon = forward_reconstruct(toy_params, frames)
            again = encode(toy_params, frames)
            per_frame = np.stack([decode_at(toy_params, desc, t, 4) for t in range(1, 5)])
        assert desc.vector().tobytes() == again.vector().tobytes()
        np.testing.assert_allclose(recon, per_frame, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("frames,dim", [(2, 12), (7, 12)])
    def test_reconstruction_shape(self, toy_config, frames, dim):
        params = init_params(toy_config, seed=0)
        _, recon = forward_reconstruct(params, np.ones((frames, dim), dtype=np.float32))
        assert recon.shape == (frames, dim)


class TestModelGradient:
    """Reconstruction gradient of a toy model against finite differences."""

    def test_reconstruction_loss_gradient(self, rng):
        config = LiftConfig(D=5, d=8, layers=1, heads=2, ffn_mult=2, T=3)
        params = init_params(config, seed=11)
        frames = rng.normal(size=(1, 3, 5))

        def objective(p):
            z_s, z_d = encode_graph(p, Tensor(frames), config)
            recon = reconstruct_graph(p, z_s, z_d, config.T)
            _, l_rec, _ = lift_loss(Tensor(frames), recon, (z_s, z_d), 0.0)
            return l_rec

        errors = grad_check_params(objective, params.tensors, max_entries=4, seed=1)
        assert max(errors.values()) < 1e-4
