"""
XCT preprocessing: 16 to 8-bit windowing, 3D median filtering, slice-wise non-local means
and Bernsen local thresholding for label generation. Borders are edge-replicated throughout.
"""
from dataclasses import dataclass, field
from typing import Sequence, Tuple
import numpy as np
from numpy.typing import NDArray
from scipy import ndimage
from .exceptions import ConfigError, DataError
from .color_logger import get_logger
from .volume import Volume, LabeledVolume


@dataclass(frozen=True)
class BernsenParams:
    window_radius: int = 15
    c_min: int = 15
    low_level: int = 128

    def __post_init__(self) -> None:
        if self.window_radius < 1:
            raise ConfigError(f'bernsen window_radius must be >= 1, got {self.window_radius}')
        if not 0 <= self.c_min <= 255:
            raise ConfigError(f'bernsen c_min must lie in [0, 255], got {self.c_min}')
        if not 0 <= self.low_level <= 255:
            raise ConfigError(f'bernsen low_level must lie in [0, 255], got {self.low_level}')


@dataclass(frozen=True)
class NlmParams:
    h: float = 10.0
    patch_radius: int = 1
    search_radius: int = 5
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.h <= 0:
            raise ConfigError(f'nlm h must be positive, got {self.h}')
        if self.patch_radius < 0 or self.search_radius < 0:
            raise ConfigError('nlm radii must be non-negative')
        if self.sigma < 0:
            raise ConfigError(f'nlm sigma must be non-negative, got {self.sigma}')


@dataclass(frozen=True)
class PreprocessParams:
    """Settings of the whole chain; `window` holds percentiles when `window_percentile` is set"""
    window: Tuple[float, float] = (0.5, 99.5)
    window_percentile: bool = True
    median_radius: int = 1
    nlm: NlmParams = field(default_factory=NlmParams)
    bernsen: BernsenParams = field(default_factory=BernsenParams)


def _cast_like(values: NDArray[np.float64], dtype: np.dtype) -> NDArray:
    if np.issubdtype(dtype, np.integer):
        info = np.iinfo(dtype)
        return np.clip(np.rint(values), info.min, info.max).astype(dtype)
    return values.astype(dtype)


def quantize_u16_to_u8(volume: Volume, lo: float, hi: float) -> Volume:
    """Linear window [lo, hi] onto [0, 255], clamped and rounded half-up"""
    if volume.dtype != 'u16':
        raise DataError(f'quantization expects a u16 volume, got {volume.dtype}')
    if lo >= hi:
        raise ConfigError(f'quantization window needs lo < hi, got ({lo}, {hi})')
    scaled = np.clip((volume.data.astype(np.float64) - lo) / (hi - lo), 0.0, 1.0)
    return Volume(np.floor(scaled * 255.0 + 0.5).astype(np.uint8), spacing=volume.spacing)


def percentile_window(volume: Volume, lo_pct: float, hi_pct: float) -> Tuple[float, float]:
    lo, hi = np.percentile(volume.data, [lo_pct, hi_pct])
    if hi <= lo:
        hi = lo + 1.0
    return float(lo), float(hi)


def median3d(volume: Volume, radius: int = 1) -> Volume:
    if radius < 1:
        raise ConfigError(f'median radius must be >= 1, got {radius}')
    filtered = ndimage.median_filter(volume.data, size=2 * radius + 1, mode='nearest')
    return Volume(filtered, spacing=volume.spacing)


def nlm_denoise_slice(image: NDArray, h: float, patch_radius: int = 1, search_radius: int = 5,
                      sigma: float = 0.0) -> NDArray[np.float64]:
    """
    Each pixel becomes the weighted mean of its search window; the weight of a candidate is
    exp(-max(d2 - 2 sigma^2, 0) / h^2), d2 being the mean squared difference of the two
    (2f+1)^2 patches. The centre pixel takes part with weight 1.
    """
    f, t = patch_radius, search_radius
    height, width = image.shape
    padded = np.pad(image.astype(np.float64), t + f, mode='edge')
    size = 2 * f + 1
    base = padded[t:t + height + 2 * f, t:t + width + 2 * f]
    total = np.zeros((height, width))
    weights = np.zeros((height, width))
    for i in range(-t, t + 1):
        for j in range(-t, t + 1):
            shifted = padded[t + i:t + i + height + 2 * f, t + j:t + j + width + 2 * f]
            d2 = ndimage.uniform_filter((shifted - base) ** 2, size=size)[f:f + height, f:f + width]
            w = np.exp(-np.maximum(d2 - 2.0 * sigma ** 2, 0.0) / (h * h))
            total += w * shifted[f:f + height, f:f + width]
            weights += w
    return total / weights


def nlm_denoise(volume: Volume, h: float = 10.0, patch_radius: int = 1, search_radius: int = 5,
                sigma: float = 0.0) -> Volume:
    """Slice-wise 2D non-local means; integer volumes are rounded back to their dtype"""
    NlmParams(h, patch_radius, search_radius, sigma)
    out = np.empty(volume.dims, dtype=np.float64)
    for k in range(volume.dims[0]):
        out[k] = nlm_denoise_slice(volume.slice(k), h, patch_radius, search_radius, sigma)
    return Volume(_cast_like(out, volume.data.dtype), spacing=volume.spacing)


def bernsen_threshold(volume: Volume, params: BernsenParams = BernsenParams()) -> Volume:
    """
    Per slice, with zmax/zmin the extrema of the square window around each pixel: where the
    contrast zmax - zmin reaches `c_min` a pixel is a defect iff it is darker than the
    mid-range, elsewhere iff the mid-range itself is below `low_level`. Integer arithmetic.
    """
    if volume.dtype != 'u8':
        raise DataError(f'bernsen thresholding expects a u8 volume, got {volume.dtype}')
    size = (1, 2 * params.window_radius + 1, 2 * params.window_radius + 1)
    data = volume.data.astype(np.int32)
    zmax = ndimage.maximum_filter(data, size=size, mode='nearest')
    zmin = ndimage.minimum_filter(data, size=size, mode='nearest')
    mid2 = zmax + zmin
    defect = np.where(zmax - zmin >= params.c_min, 2 * data < mid2, mid2 < 2 * params.low_level)
    return Volume(defect.astype(np.uint8), spacing=volume.spacing)


def to_u8(volume: Volume, window: Sequence[float] = (0.5, 99.5), window_percentile: bool = True) -> Volume:
    match volume.dtype:
        case 'u8':
            return volume
        case 'u16':
            lo, hi = float(window[0]), float(window[1])
            if window_percentile:
                lo, hi = percentile_window(volume, lo, hi)
            get_logger().debug(f'Quantizing u16 volume with window [{lo}, {hi}]')
            return quantize_u16_to_u8(volume, lo, hi)
        case _:
            raise DataError(f'preprocessing expects a u8 or u16 volume, got {volume.dtype}')


def preprocess_volume(volume: Volume, params: PreprocessParams = PreprocessParams()) -> LabeledVolume:
    """quantize (u16 only), median, NLM, Bernsen; returns the filtered u8 image and its label mask"""
    logger = get_logger()
    image = to_u8(volume, params.window, params.window_percentile)
    logger.debug(f'Median filter, radius {params.median_radius}')
    image = median3d(image, params.median_radius)
    nlm = params.nlm
    logger.debug(f'Non-local means, h={nlm.h} patch={nlm.patch_radius} search={nlm.search_radius}')
    image = nlm_denoise(image, nlm.h, nlm.patch_radius, nlm.search_radius, nlm.sigma)
    logger.debug(f'Bernsen threshold, {params.bernsen}')
    return LabeledVolume(image, bernsen_threshold(image, params.bernsen))
