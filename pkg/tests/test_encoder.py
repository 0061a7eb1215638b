import numpy as np
import pytest

from subdetector import encoder as enc
from subdetector import gradcore as gc
from conftest import check_grad

SMALL = enc.TcnConfig(layers=2, kernel_size=3, dilations=(1, 2), hidden_dim=4)


def small_params(rng, num_scales=3):
    return enc.init_encoder_params(SMALL, num_scales, rng)


class TestTcnForward:
    def test_causality_probe(self, rng):
        params = small_params(rng)
        windows = rng.normal(size=(3, 16))
        base = enc.tcn_forward(windows, params, SMALL).data
        for _ in range(5):
            i = rng.integers(0, 3)
            t = rng.integers(0, 15)
            bumped = windows.copy()
            bumped[i, t + 1:] += rng.normal(size=15 - t)
            out = enc.tcn_forward(bumped, params, SMALL).data
            assert np.array_equal(base[i, :t + 1], out[i, :t + 1])

    def test_zero_weights_give_zero_output_without_norm(self, rng):
        cfg = enc.TcnConfig(layers=2, kernel_size=3, dilations=(1, 2),
                            hidden_dim=4, layer_norm=False)
        params = enc.init_encoder_params(cfg, 3, rng)
        for name, p in params.items():
            if name.startswith("conv"):
                p.data[:] = 0.0
        out = enc.tcn_forward(rng.normal(size=(2, 12)), params, cfg)
        assert np.array_equal(out.data, np.zeros_like(out.data))

    def test_gradient_matches_finite_differences(self, rng):
        params = small_params(rng)
        windows = rng.normal(size=(2, 10))
        trainable = [params["conv0_w"], params["conv1_b"], params["ln0_gain"]]

        def build():
            out = enc.tcn_forward(windows, params, SMALL)
            return gc.tsum(out * out)

        check_grad(build, trainable, entries=8, rng=rng)

    def test_receptive_field(self):
        assert SMALL.receptive_field == 7
        assert enc.TcnConfig().receptive_field == 15

    def test_dilation_count_must_match_layers(self):
        with pytest.raises(ValueError):
            enc.TcnConfig(layers=2, dilations=(1, 2, 4))


class TestStatsPool:
    def test_constant_rows(self):
        r = gc.constant(np.full((2, 5, 3), 4.0))
        out = enc.stats_pool(r).data
        assert np.allclose(out[:, 0:3], 4.0)   # mean
        assert np.allclose(out[:, 3:6], 0.0)   # var
        assert np.allclose(out[:, 6:9], 4.0)   # max
        assert np.allclose(out[:, 9:12], 4.0)  # min

    def test_singleton_time_axis(self):
        row = np.arange(3.0).reshape(1, 1, 3)
        out = enc.stats_pool(gc.constant(row)).data[0]
        assert np.array_equal(out[0:3], [0, 1, 2])
        assert np.array_equal(out[3:6], [0, 0, 0])
        assert np.array_equal(out[6:9], [0, 1, 2])
        assert np.array_equal(out[9:12], [0, 1, 2])

    def test_two_point_arithmetic(self):
        r = np.zeros((1, 2, 2))
        r[0, 1, :] = 2.0
        out = enc.stats_pool(gc.constant(r)).data[0]
        assert np.array_equal(out, [1, 1, 1, 1, 2, 2, 0, 0])

    def test_permutation_invariance(self, rng):
        r = rng.normal(size=(2, 7, 3))
        shuffled = r[:, rng.permutation(7), :]
        a = enc.stats_pool(gc.constant(r)).data
        b = enc.stats_pool(gc.constant(shuffled)).data
        assert np.allclose(a, b, atol=1e-12)

    def test_variance_block_non_negative_and_max_ge_min(self, rng):
        r = rng.normal(size=(4, 9, 5))
        out = enc.stats_pool(gc.constant(r)).data
        d = 5
        assert (out[:, d:2 * d] >= 0.0).all()
        assert (out[:, 2 * d:3 * d] >= out[:, 3 * d:]).all()


class TestSelectLength:
    def test_zero_embedding_gives_uniform_average(self, rng):
        params = small_params(rng)
        z_scales = [gc.constant(rng.normal(size=(3, 16))) for _ in range(4)]
        w = enc.init_length_embedding(3, 4)
        z, _ = enc.select_length(z_scales, w, params)
        want = sum(zp.data for zp in z_scales) / 4.0
        assert np.allclose(z.data, want, atol=1e-12)
        assert np.allclose(enc.scale_weights(w).data, 0.25)

    def test_saturated_embedding_picks_one_scale(self, rng):
        params = small_params(rng)
        z_scales = [gc.constant(rng.normal(size=(2, 16))) for _ in range(3)]
        w = gc.param(np.tile([10.0, -10.0, -10.0], (2, 1)), "w")
        z, _ = enc.select_length(z_scales, w, params)
        rel = np.abs(z.data - z_scales[0].data) / np.maximum(
            np.abs(z_scales[0].data), 1e-12)
        assert rel.max() < 1e-3

    def test_argmax_shift_invariance(self, rng):
        w = rng.normal(size=(5, 4))
        a = enc.scale_weights(gc.constant(w)).data
        b = enc.scale_weights(gc.constant(w + 3.7)).data
        assert np.array_equal(a.argmax(axis=1), b.argmax(axis=1))
        assert np.allclose(a, b, atol=1e-12)

    def test_one_hot_prior(self):
        w = enc.init_length_embedding(4, 3, prior_scale=1)
        assert np.array_equal(w.data[:, 1], np.ones(4))
        with pytest.raises(ValueError):
            enc.init_length_embedding(4, 3, prior_scale=5)


def test_end_to_end_encoder_gradient(rng):
    params = small_params(rng)
    windows = rng.normal(size=(3, 12))
    w = enc.init_length_embedding(3, 3)
    lengths = [3, 6, 12]
    trainable = [params["conv0_w"], params["mlp_w1"], w]

    def build():
        r = enc.tcn_forward(windows, params, SMALL)
        z_scales = enc.multi_scale_stats(r, lengths)
        _, h = enc.select_length(z_scales, w, params)
        return gc.tsum(h * h)

    check_grad(build, trainable, entries=8, rng=rng)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path, rng):
        arrays = {
            "conv0_w": rng.normal(size=(3, 1, 4)),
            "bias": rng.normal(size=(7,)),
            "scalar": np.array(2.5),
        }
        path = str(tmp_path / "model.ckpt")
        enc.save_checkpoint(path, arrays)
        loaded = enc.load_checkpoint(path)
        assert set(loaded) == set(arrays)
        for name in arrays:
            assert np.array_equal(loaded[name], np.asarray(arrays[name]))
            assert loaded[name].shape == np.asarray(arrays[name]).shape

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(enc.CheckpointError):
            enc.load_checkpoint(str(path))

    def test_missing_file(self):
        with pytest.raises(enc.CheckpointError):
            enc.load_checkpoint("/does/not/exist.ckpt")
