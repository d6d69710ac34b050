from typing import Sequence, Tuple
import numpy as np
from numpy.typing import NDArray
from .exceptions import ShapeError, ConfigError
from .volume import Volume, LabeledVolume
from .utils import as_triple
from ._types import Normalization

FG_MAX_TRIES = 100


def normalize_zscore(volume: Volume) -> Volume:
    """Per-volume zero mean and unit std; constant volumes map to zeros"""
    if volume.data.size == 0:
        raise ShapeError('cannot normalize an empty volume')
    values = volume.data.astype(np.float64)
    std = max(float(values.std()), 1e-8)
    return Volume(((values - values.mean()) / std).astype(np.float32), spacing=volume.spacing)


def normalize_minmax(volume: Volume, window: Sequence[float] = ()) -> Volume:
    """Maps `window` (or the volume's own min/max) linearly onto [0, 1], clipping outside"""
    if volume.data.size == 0:
        raise ShapeError('cannot normalize an empty volume')
    values = volume.data.astype(np.float64)
    lo, hi = (float(window[0]), float(window[1])) if window else (float(values.min()), float(values.max()))
    if hi <= lo:
        return Volume(np.zeros(volume.dims, dtype=np.float32), spacing=volume.spacing)
    return Volume(np.clip((values - lo) / (hi - lo), 0.0, 1.0).astype(np.float32), spacing=volume.spacing)


def normalize(volume: Volume, mode: Normalization = 'zscore', window: Sequence[float] = ()) -> Volume:
    match mode:
        case 'zscore':
            return normalize_zscore(volume)
        case 'minmax':
            return normalize_minmax(volume, window)
        case _:
            raise ConfigError(f'unknown normalization {mode!r}')


def _crop(lv: LabeledVolume, origin: Tuple[int, ...], patch: Tuple[int, ...]) -> LabeledVolume:
    window = tuple(slice(o, o + p) for o, p in zip(origin, patch))
    return LabeledVolume(
        Volume(lv.image.data[window].copy(), spacing=lv.image.spacing),
        Volume(lv.mask.data[window].copy(), spacing=lv.mask.spacing)
    )


def sample_patch(lv: LabeledVolume, patch: int | Sequence[int], rng: np.random.Generator, fg_bias: float = 0.5) -> LabeledVolume:
    """
    Crops image and mask at one shared origin. With probability `fg_bias` the origin is
    drawn by rejection until the patch holds a defect voxel (at most FG_MAX_TRIES draws,
    then the last uniform draw is kept).
    """
    patch = as_triple(patch, 'patch')
    if any(p > d or p < 1 for p, d in zip(patch, lv.dims)):
        raise ShapeError(f'patch {patch} does not fit volume {lv.dims}')
    limits = [d - p + 1 for d, p in zip(lv.dims, patch)]

    def draw() -> Tuple[int, ...]:
        return tuple(int(rng.integers(0, limit)) for limit in limits)

    origin = draw()
    if rng.random() < fg_bias:
        for _ in range(FG_MAX_TRIES):
            window = tuple(slice(o, o + p) for o, p in zip(origin, patch))
            if lv.mask.data[window].any():
                break
            origin = draw()
    return _crop(lv, origin, patch)


def augment(patch: LabeledVolume, rng: np.random.Generator, flip: bool = True, rotate: bool = True) -> LabeledVolume:
    """
    Independent flips of d, h and w (p=0.5 each), then a k*90 degree rotation in the h-w
    plane with k uniform in {0..3}; odd k is skipped when h != w. The draws happen in that
    fixed order whatever the toggles say, so enabling one never shifts the other's stream.
    """
    image, mask = patch.image.data, patch.mask.data
    flips = [rng.random() < 0.5 for _ in range(3)]
    k = int(rng.integers(0, 4))
    if flip:
        for axis, flipped in enumerate(flips):
            if flipped:
                image, mask = np.flip(image, axis), np.flip(mask, axis)
    if rotate and k and (k % 2 == 0 or image.shape[1] == image.shape[2]):
        image, mask = np.rot90(image, k, axes=(1, 2)), np.rot90(mask, k, axes=(1, 2))
    return LabeledVolume(
        Volume(np.ascontiguousarray(image), spacing=patch.image.spacing),
        Volume(np.ascontiguousarray(mask), spacing=patch.mask.spacing)
    )


def porosity(mask: Volume | NDArray) -> float:
    """Fraction of defect voxels"""
    data = mask.data if isinstance(mask, Volume) else np.asarray(mask)
    return float(np.count_nonzero(data)) / data.size if data.size else 0.0
