import numpy as np
import pytest
from vseg.exceptions import ConfigError, ShapeError
from vseg.inference import ProbVolume, binarize, gaussian_weights, plan_tiles, predict_volume
from vseg.unet import UNetConfig, build_model
from vseg.volume import Volume


class TestPlanTiles:
    @pytest.mark.parametrize('extent, origins', [(128, (0,)), (160, (0, 32)), (130, (0, 2)), (200, (0, 32, 64, 72))])
    def test_axis_origins(self, extent, origins):
        plan = plan_tiles((extent, 128, 128), 128, 32)
        assert plan.axis_origins[0] == origins
        assert plan.padded_dims == (extent, 128, 128) and plan.pad_before == (0, 0, 0)

    def test_origins_lexicographic(self):
        plan = plan_tiles((12, 8, 8), 8, 4)
        assert plan.origins == [(0, 0, 0), (4, 0, 0)]
        assert len(plan) == 2

    @pytest.mark.parametrize('dims, patch, stride', [((10, 13, 7), 4, 3), ((33, 16, 9), (8, 8, 4), (8, 5, 1)), ((5, 5, 5), 8, 8)])
    def test_full_coverage(self, dims, patch, stride):
        plan = plan_tiles(dims, patch, stride)
        assert plan.crop(plan.coverage()).min() >= 1

    def test_small_volume_is_padded(self):
        plan = plan_tiles((5, 6, 7), 8, 4)
        assert plan.padded_dims == (8, 8, 8)
        assert plan.pad_before == (1, 1, 0)
        assert plan.origins == [(0, 0, 0)]

    @pytest.mark.parametrize('stride', [0, 9])
    def test_bad_stride(self, stride):
        with pytest.raises(ConfigError):
            plan_tiles((16, 16, 16), 8, stride)

    def test_patch_divisor(self):
        with pytest.raises(ShapeError, match='divisible by 4'):
            plan_tiles((16, 16, 16), 6, 2, divisor=4)

    def test_empty_volume(self):
        with pytest.raises(ShapeError):
            plan_tiles((0, 4, 4), 4, 4)


class TestGaussianWeights:
    def test_shape_peak_floor(self):
        weights = gaussian_weights((8, 8, 16))
        assert weights.shape == (8, 8, 16)
        assert weights.max() == pytest.approx(1.0)
        assert weights.min() >= 1e-3
        np.testing.assert_allclose(weights, weights[::-1, ::-1, ::-1])


def _voxelwise_model(monkeypatch, logit_of):
    """A tiny model whose forward pass is replaced by a voxel-wise logit map"""
    model = build_model(UNetConfig(levels=2, base_channels=2))

    def forward(x, mode='eval'):
        logits = np.zeros((x.shape[0], 2) + x.shape[2:], dtype=x.dtype)
        logits[:, 1] = logit_of(x[:, 0])
        return logits

    monkeypatch.setattr(model, 'forward', forward)
    return model


class TestPredictVolume:
    @pytest.mark.parametrize('blend', ['uniform', 'gaussian'])
    def test_constant_logits(self, monkeypatch, blend):
        model = _voxelwise_model(monkeypatch, lambda x: np.full(x.shape, np.log(3.0)))
        volume = Volume(np.zeros((10, 12, 9), np.float32))
        prob = predict_volume(model, volume, plan_tiles(volume.dims, 8, 4), blend=blend)
        assert prob.dims == (10, 12, 9)
        np.testing.assert_allclose(prob.data, 0.75, atol=1e-6)

    @pytest.mark.parametrize('stride, blend', [(8, 'uniform'), (4, 'uniform'), (3, 'gaussian'), (1, 'uniform')])
    def test_stride_invariance_for_voxelwise_model(self, monkeypatch, rng, stride, blend):
        model = _voxelwise_model(monkeypatch, lambda x: x)
        data = rng.standard_normal((9, 10, 11)).astype(np.float32)
        prob = predict_volume(model, Volume(data), plan_tiles(data.shape, 8, stride), blend=blend)
        np.testing.assert_allclose(prob.data, 1 / (1 + np.exp(-data.astype(np.float64))), atol=1e-6)

    @pytest.mark.parametrize('logits', [(0.0, 0.3), (0.1, -0.7), (0.0, 1.234567)])
    def test_constant_logits_bit_equal_across_strides(self, monkeypatch, logits):
        model = build_model(UNetConfig(levels=2, base_channels=2))

        def forward(x, mode='eval'):
            out = np.empty((x.shape[0], 2) + x.shape[2:], dtype=x.dtype)
            out[:, 0], out[:, 1] = logits
            return out

        monkeypatch.setattr(model, 'forward', forward)
        volume = Volume(np.zeros((70, 70, 70), np.float32))
        dense = predict_volume(model, volume, plan_tiles(volume.dims, 32, 16))
        sparse = predict_volume(model, volume, plan_tiles(volume.dims, 32, 32))
        np.testing.assert_array_equal(dense.data, sparse.data)

    def test_real_model_is_deterministic(self, rng):
        model = build_model(UNetConfig(levels=2, base_channels=2), seed=1)
        volume = Volume(rng.standard_normal((12, 8, 10)).astype(np.float32))
        plan = plan_tiles(volume.dims, 8, 4, divisor=2)
        a = predict_volume(model, volume, plan)
        b = predict_volume(model, volume, plan)
        assert a.data.dtype == np.float32
        assert 0.0 <= a.data.min() and a.data.max() <= 1.0
        np.testing.assert_array_equal(a.data, b.data)

    def test_volume_smaller_than_patch(self, monkeypatch):
        model = _voxelwise_model(monkeypatch, lambda x: x)
        data = np.zeros((1, 3, 5), np.float32)
        prob = predict_volume(model, Volume(data), plan_tiles(data.shape, 4, 4))
        np.testing.assert_allclose(prob.data, 0.5, atol=1e-6)

    def test_plan_mismatch(self):
        model = build_model(UNetConfig(levels=2, base_channels=2))
        with pytest.raises(ShapeError):
            predict_volume(model, Volume(np.zeros((8, 8, 8), np.float32)), plan_tiles((8, 8, 9), 8, 8))

    def test_unknown_blend(self):
        model = build_model(UNetConfig(levels=2, base_channels=2))
        with pytest.raises(ConfigError):
            predict_volume(model, Volume(np.zeros((8, 8, 8), np.float32)), plan_tiles((8, 8, 8), 8, 8), blend='max')


class TestBinarize:
    def test_threshold_is_inclusive(self):
        prob = ProbVolume(np.array([0.2, 0.5, 0.7, 1.0], np.float32).reshape(1, 2, 2))
        assert binarize(prob).data.ravel().tolist() == [0, 1, 1, 1]
        assert binarize(prob).dtype == 'u8'

    def test_monotone_in_threshold(self, rng):
        prob = ProbVolume(rng.random((4, 4, 4)).astype(np.float32))
        masks = [binarize(prob, t).data for t in (0.1, 0.3, 0.5, 0.9)]
        for looser, stricter in zip(masks, masks[1:]):
            assert np.all(stricter <= looser)

    @pytest.mark.parametrize('threshold', [0.0, 1.0, 1.5])
    def test_invalid_threshold(self, threshold):
        with pytest.raises(ConfigError):
            binarize(ProbVolume(np.zeros((1, 1, 1), np.float32)), threshold)

    def test_prob_volume_range(self):
        with pytest.raises(ValueError):
            ProbVolume(np.full((1, 1, 1), 1.5, np.float32))
