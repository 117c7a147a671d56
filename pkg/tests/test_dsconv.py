"""Snake convolution: offsets, position accumulation, degeneration."""

import numpy as np
import pytest

from octaseg import autodiff as ad
from octaseg.autodiff import Tensor, backward
from octaseg.dsconv import DSConvConfig, SnakeConv2d, SnakeConvBlock, accumulate_positions
from octaseg.network import init_parameters


def make_snake(in_ch=2, out_ch=3, axis="x", k=5, seed=1, dtype=np.float32):
    module = SnakeConv2d(in_ch, out_ch, axis=axis, kernel_points=k, dtype=dtype)
    init_parameters(module, seed)
    return module


class TestOffsets:
    def test_zero_weights_give_zero_offsets(self, rng):
        snake = make_snake()
        feature = Tensor(rng.random((1, 2, 8, 8), dtype=np.float32))
        offsets = snake.predict_offsets(feature)
        assert offsets.shape == (1, 4, 8, 8)
        assert np.all(offsets.data == 0.0)  # offset conv is zero-initialized

    def test_offsets_strictly_inside_unit_interval(self, rng):
        snake = make_snake()
        snake.offset_conv.weight.data[...] = rng.standard_normal(
            snake.offset_conv.weight.shape).astype(np.float32)
        feature = Tensor(rng.random((1, 2, 8, 8), dtype=np.float32))
        offsets = snake.predict_offsets(feature)
        assert np.all(np.abs(offsets.data) < 1.0)
        # extreme activations saturate float tanh at the boundary but
        # never overshoot it
        extreme = Tensor(rng.random((1, 2, 8, 8), dtype=np.float32) * 1e4)
        assert np.all(np.abs(snake.predict_offsets(extreme).data) <= 1.0)

    def test_deterministic_per_seed(self, rng):
        feature = rng.random((1, 2, 8, 8), dtype=np.float32)
        a = make_snake(seed=9)
        b = make_snake(seed=9)
        a.offset_conv.weight.data[...] = 0.3
        b.offset_conv.weight.data[...] = 0.3
        oa = a.predict_offsets(Tensor(feature)).data
        ob = b.predict_offsets(Tensor(feature)).data
        assert oa.tobytes() == ob.tobytes()

    def test_small_extent_rejected(self, rng):
        snake = make_snake(k=9)
        with pytest.raises(ValueError, match="9"):
            snake.predict_offsets(Tensor(rng.random((1, 2, 8, 8), dtype=np.float32)))


class TestAccumulatePositions:
    def test_zero_offsets_give_integer_line(self):
        B, H, W, K = 1, 6, 7, 5
        offsets = Tensor(np.zeros((B, K - 1, H, W), dtype=np.float32))
        coords = accumulate_positions(offsets, "x", K).data
        ii = np.arange(H).reshape(H, 1)
        jj = np.arange(W).reshape(1, W)
        for idx, m in enumerate(range(-2, 3)):
            assert np.array_equal(coords[0, 0, idx], np.broadcast_to(ii, (H, W)))
            assert np.array_equal(coords[0, 1, idx], np.broadcast_to(jj + m, (H, W)))

    def test_constant_half_offsets_accumulate(self):
        # per-side cumulative sums: displacement 0.5 at m=+-1, 1.0 at m=+-2
        B, H, W, K = 1, 4, 4, 5
        offsets = Tensor(np.full((B, K - 1, H, W), 0.5, dtype=np.float32))
        coords = accumulate_positions(offsets, "x", K).data
        ii = np.broadcast_to(np.arange(H).reshape(H, 1), (H, W))
        expected_disp = [1.0, 0.5, 0.0, 0.5, 1.0]  # m = -2, -1, 0, +1, +2
        for idx, disp in enumerate(expected_disp):
            assert np.allclose(coords[0, 0, idx], ii + disp)

    def test_mirrored_offsets_are_mirror_symmetric(self, rng):
        B, H, W, K = 1, 5, 5, 7
        h = (K - 1) // 2
        per_step = rng.uniform(-0.9, 0.9, size=(h, H, W)).astype(np.float32)
        # negative-side channels ordered m=-h..-1; mirror means the step
        # at distance q from the center matches on both sides
        offsets = np.concatenate([per_step[::-1], per_step], axis=0)[None]
        coords = accumulate_positions(Tensor(offsets), "x", K).data
        ii = np.broadcast_to(np.arange(H).reshape(H, 1), (H, W))
        for q in range(1, h + 1):
            disp_neg = coords[0, 0, h - q] - ii
            disp_pos = coords[0, 0, h + q] - ii
            assert np.allclose(disp_neg, disp_pos, atol=1e-6)

    def test_fixed_axis_never_deforms(self, rng):
        B, H, W, K = 2, 6, 6, 5
        offsets = Tensor(rng.uniform(-0.99, 0.99, size=(B, K - 1, H, W)).astype(np.float32))
        coords_x = accumulate_positions(offsets, "x", K).data
        coords_y = accumulate_positions(offsets, "y", K).data
        jj = np.arange(W).reshape(1, W)
        ii = np.arange(H).reshape(H, 1)
        for idx, m in enumerate(range(-2, 3)):
            assert np.array_equal(coords_x[:, 1, idx], np.broadcast_to(jj + m, (B, H, W)))
            assert np.array_equal(coords_y[:, 0, idx], np.broadcast_to(ii + m, (B, H, W)))

    def test_cumulative_displacement_bounded_by_extent(self, rng):
        B, H, W, K = 1, 6, 6, 9
        h = (K - 1) // 2
        offsets = Tensor(np.tanh(rng.standard_normal((B, K - 1, H, W))).astype(np.float32))
        coords = accumulate_positions(offsets, "x", K).data
        ii = np.broadcast_to(np.arange(H).reshape(H, 1), (B, H, W))
        for q in range(1, h + 1):
            assert np.abs(coords[:, 0, h + q] - ii).max() < q
            assert np.abs(coords[:, 0, h - q] - ii).max() < q


class TestSnakeForward:
    @pytest.mark.parametrize("axis", ["x", "y"])
    def test_zero_offsets_degenerate_to_rigid_line_conv(self, rng, axis):
        snake = make_snake(in_ch=2, out_ch=3, axis=axis, k=5)
        feature = rng.random((2, 2, 9, 9), dtype=np.float32)
        out = snake(Tensor(feature))
        kernel = snake.weight.data[:, :, None, :] if axis == "x" \
            else snake.weight.data[:, :, :, None]
        rigid = ad.conv2d(Tensor(feature), Tensor(kernel), snake.bias)
        assert np.allclose(out.data, rigid.data, atol=1e-5)

    def test_zero_feature_gives_bias_only(self):
        snake = make_snake(in_ch=2, out_ch=3, k=5)
        out = snake(Tensor(np.zeros((1, 2, 7, 7), dtype=np.float32)))
        expected = np.broadcast_to(snake.bias.data.reshape(1, 3, 1, 1), out.shape)
        assert np.allclose(out.data, expected)

    def test_offset_weights_receive_nonzero_gradient(self, rng):
        snake = make_snake(in_ch=1, out_ch=1, k=5, dtype=np.float64)
        snake.offset_conv.weight.data = rng.uniform(
            -0.3, 0.3, snake.offset_conv.weight.shape)
        feature = Tensor(rng.random((1, 1, 8, 8)))  # non-constant
        loss = snake(feature).sum()
        snake.zero_grad()
        backward(loss, parameters=snake.parameters())
        assert np.abs(snake.offset_conv.weight.grad).max() > 0


class TestSnakeBlock:
    def test_output_shape_contract(self, rng):
        block = SnakeConvBlock(3, 6, kernel_points=5)
        init_parameters(block, 0)
        out = block(Tensor(rng.random((2, 3, 8, 8), dtype=np.float32)))
        assert out.shape == (2, 6, 8, 8)

    def test_zeroed_snake_branches_reduce_to_standard_path(self, rng):
        block = SnakeConvBlock(2, 4, kernel_points=5)
        init_parameters(block, 3)
        for branch in (block.branch_x, block.branch_y):
            for p in branch.parameters():
                p.data[...] = 0.0
        x = Tensor(rng.random((1, 2, 8, 8), dtype=np.float32))
        got = block(x).data

        std = block.branch_std(x)
        fuse_w = block.fuse.weight.data[:, 2 * 4:, :, :]  # std branch slice
        ref = ad.relu(ad.conv2d(std, Tensor(fuse_w), block.fuse.bias))
        assert np.allclose(got, ref.data, atol=1e-6)

    def test_parameter_count_matches_enumeration(self):
        C_in, C_out, K = 3, 5, 7
        block = SnakeConvBlock(C_in, C_out, kernel_points=K)
        # per snake branch: offset conv (3x3 -> K-1 channels) + line kernel
        offset_conv = (K - 1) * C_in * 9 + (K - 1)
        line = C_out * C_in * K + C_out
        std = C_out * C_in * 9 + C_out
        fuse = C_out * (3 * C_out) + C_out
        expected = 2 * (offset_conv + line) + std + fuse
        assert sum(p.data.size for p in block.parameters()) == expected


def test_config_validation():
    with pytest.raises(ValueError):
        DSConvConfig(2, 2, axis="z")
    with pytest.raises(ValueError):
        DSConvConfig(2, 2, kernel_points=4)
