import numpy as np
import pytest
from scipy import ndimage
from vseg.exceptions import ConfigError, DataError
from vseg.metrics import confusion_counts, iou_report
from vseg.preprocess import (BernsenParams, NlmParams, PreprocessParams, quantize_u16_to_u8, percentile_window,
                             median3d, nlm_denoise, nlm_denoise_slice, bernsen_threshold, to_u8, preprocess_volume)
from vseg.synth import SynthSpec, synth_generate
from vseg.volume import Volume
from oracles import naive_bernsen, naive_median3d, naive_nlm_slice

SEEDS = range(20)


def _random_u8(rng, high: int = 8) -> Volume:
    return Volume(rng.integers(0, 256, size=tuple(rng.integers(1, high + 1, size=3))).astype(np.uint8))


class TestQuantize:
    def test_levels(self):
        volume = Volume(np.array([0, 1000, 500, 2000], dtype=np.uint16).reshape(1, 2, 2))
        out = quantize_u16_to_u8(volume, 0, 1000)
        assert out.dtype == 'u8'
        assert out.data.ravel().tolist() == [0, 255, 128, 255]

    def test_empty_window(self):
        with pytest.raises(ConfigError):
            quantize_u16_to_u8(Volume(np.zeros((1, 1, 1), np.uint16)), 10, 10)

    def test_requires_u16(self):
        with pytest.raises(DataError):
            quantize_u16_to_u8(Volume(np.zeros((1, 1, 1), np.uint8)), 0, 1)

    def test_percentile_window_of_constant_volume(self):
        assert percentile_window(Volume(np.full((2, 2, 2), 300, np.uint16)), 0.5, 99.5) == (300.0, 301.0)

    def test_to_u8(self):
        u8 = Volume(np.zeros((1, 1, 1), np.uint8))
        assert to_u8(u8) is u8
        raw = Volume(np.array([100, 200, 300, 400], np.uint16).reshape(1, 2, 2))
        assert to_u8(raw, (100, 400), window_percentile=False).data.ravel().tolist() == [0, 85, 170, 255]
        with pytest.raises(DataError):
            to_u8(Volume(np.zeros((1, 1, 1), np.float32)))


class TestMedian:
    @pytest.mark.parametrize('seed', SEEDS)
    def test_matches_oracle(self, seed):
        rng = np.random.default_rng(seed)
        volume, radius = _random_u8(rng), int(rng.integers(1, 3))
        np.testing.assert_array_equal(median3d(volume, radius).data, naive_median3d(volume.data, radius))

    def test_removes_impulse(self):
        data = np.full((5, 5, 5), 100, np.uint8)
        data[2, 2, 2] = 255
        assert np.all(median3d(Volume(data)).data == 100)

    def test_radius(self):
        with pytest.raises(ConfigError):
            median3d(Volume(np.zeros((1, 1, 1), np.uint8)), 0)


class TestNlm:
    def test_constant_image(self):
        image = np.full((8, 9), 77.0)
        np.testing.assert_allclose(nlm_denoise_slice(image, h=5.0), image)

    @pytest.mark.parametrize('seed', SEEDS)
    def test_matches_oracle(self, seed):
        rng = np.random.default_rng(seed)
        image = rng.integers(0, 256, size=tuple(rng.integers(1, 9, size=2))).astype(np.float64)
        h, patch_radius, search_radius = float(rng.uniform(5, 40)), int(rng.integers(1, 3)), int(rng.integers(1, 3))
        sigma = float(rng.choice([0.0, 5.0]))
        expected = naive_nlm_slice(image, h=h, patch_radius=patch_radius, search_radius=search_radius, sigma=sigma)
        np.testing.assert_allclose(nlm_denoise_slice(image, h, patch_radius, search_radius, sigma), expected, rtol=1e-6)

    def test_large_h_is_box_mean(self, rng):
        image = rng.random((9, 9)) * 100
        expected = ndimage.uniform_filter(image, size=5, mode='nearest')
        np.testing.assert_allclose(nlm_denoise_slice(image, h=1e6, patch_radius=1, search_radius=2), expected, atol=1e-3)

    def test_volume_keeps_dtype(self, rng):
        volume = Volume(rng.integers(0, 256, size=(3, 8, 8)).astype(np.uint8))
        out = nlm_denoise(volume, h=10.0, search_radius=2)
        assert out.dtype == 'u8' and out.dims == volume.dims

    def test_reduces_noise(self, rng):
        clean = np.full((2, 24, 24), 128.0)
        noisy = Volume(np.clip(clean + rng.normal(0, 10, clean.shape), 0, 255).astype(np.float32))
        out = nlm_denoise(noisy, h=15.0, search_radius=3)
        assert np.std(out.data - clean) < 0.6 * np.std(noisy.data - clean)

    def test_invalid_params(self):
        with pytest.raises(ConfigError):
            NlmParams(h=0.0)


class TestBernsen:
    @pytest.mark.parametrize('level, expected', [(200, 0), (50, 1)])
    def test_constant_volume(self, level, expected):
        out = bernsen_threshold(Volume(np.full((2, 6, 6), level, np.uint8)), BernsenParams(window_radius=2))
        assert np.all(out.data == expected)

    @pytest.mark.parametrize('seed', SEEDS)
    def test_matches_oracle(self, seed):
        rng = np.random.default_rng(seed)
        volume = _random_u8(rng)
        radius, c_min, low_level = int(rng.integers(1, 4)), int(rng.integers(0, 120)), int(rng.integers(0, 256))
        out = bernsen_threshold(volume, BernsenParams(window_radius=radius, c_min=c_min, low_level=low_level))
        np.testing.assert_array_equal(out.data, naive_bernsen(volume.data, radius, c_min, low_level))

    def test_two_level_slice(self):
        data = np.full((1, 12, 12), 200, np.uint8)
        data[:, 3:8, 2:9] = 50
        out = bernsen_threshold(Volume(data), BernsenParams(window_radius=2))
        np.testing.assert_array_equal(out.data, (data == 50).astype(np.uint8))

    def test_requires_u8(self):
        with pytest.raises(DataError):
            bernsen_threshold(Volume(np.zeros((1, 2, 2), np.uint16)))

    @pytest.mark.parametrize('kwargs', [{'window_radius': 0}, {'c_min': 300}, {'low_level': -1}])
    def test_invalid_params(self, kwargs):
        with pytest.raises(ConfigError):
            BernsenParams(**kwargs)


class TestChain:
    def test_recovers_synthetic_pores(self):
        lv = synth_generate(SynthSpec(dims=(32, 32, 32), target_porosity=0.05, radius_range=(3.0, 6.0), seed=2))
        params = PreprocessParams(nlm=NlmParams(h=10.0, search_radius=3), bernsen=BernsenParams(window_radius=7, c_min=40))
        out = preprocess_volume(lv.image, params)
        assert out.image.dtype == 'u8' and out.dims == lv.dims

        truth = lv.mask.data.astype(bool)
        band = ndimage.binary_dilation(truth) & ~ndimage.binary_erosion(truth)
        keep = ~band
        report = iou_report(confusion_counts(out.mask.data[keep], lv.mask.data[keep]))
        assert report.iou_defect >= 0.8

    def test_u16_input(self, rng):
        raw = Volume((rng.random((4, 8, 8)) * 4000).astype(np.uint16))
        out = preprocess_volume(raw, PreprocessParams(nlm=NlmParams(search_radius=1), bernsen=BernsenParams(window_radius=2)))
        assert out.image.dtype == 'u8' and out.mask.dtype == 'u8'
