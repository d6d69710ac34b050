"""
Overlapping sliding-window prediction over whole volumes. Tiles are patch-sized crops of the
(reflection padded) volume; defect probabilities of overlapping tiles are blended per voxel.
"""
import itertools
from dataclasses import dataclass
from typing import List, Sequence, Tuple
import numpy as np
from numpy.typing import NDArray
from tqdm import tqdm
from .exceptions import ConfigError, ShapeError
from .color_logger import get_logger
from .nn import functional as F
from .unet import UNetModel
from .utils import as_triple
from .volume import Volume
from ._types import BlendMode, Triple

GAUSSIAN_SIGMA_FRACTION = 1 / 8
GAUSSIAN_FLOOR = 1e-3


@dataclass(frozen=True)
class TilePlan:
    dims: Triple
    patch: Triple
    stride: Triple
    padded_dims: Triple
    pad_before: Triple
    axis_origins: Tuple[Tuple[int, ...], ...]

    @property
    def origins(self) -> List[Triple]:
        """Tile origins in the padded volume, lexicographically increasing"""
        return list(itertools.product(*self.axis_origins))  # type: ignore[arg-type]

    def __len__(self) -> int:
        return int(np.prod([len(a) for a in self.axis_origins]))

    def window(self, origin: Sequence[int]) -> Tuple[slice, ...]:
        return tuple(slice(o, o + p) for o, p in zip(origin, self.patch))

    def coverage(self) -> NDArray[np.int32]:
        """Number of tiles covering each voxel of the padded volume"""
        counts = np.zeros(self.padded_dims, dtype=np.int32)
        for origin in self.origins:
            counts[self.window(origin)] += 1
        return counts

    def crop(self, padded: NDArray) -> NDArray:
        return padded[tuple(slice(b, b + d) for b, d in zip(self.pad_before, self.dims))]


def _axis_origins(extent: int, patch: int, stride: int) -> Tuple[int, ...]:
    last = extent - patch
    origins = list(range(0, last + 1, stride))
    if origins[-1] != last:
        origins.append(last)
    return tuple(origins)


def plan_tiles(dims: Sequence[int], patch: int | Sequence[int], stride: int | Sequence[int], divisor: int = 1) -> TilePlan:
    """
    Axes shorter than the patch are padded up to it (split evenly, extra voxel after).
    Per axis the origins are 0, s, 2s, ... plus a final origin at extent - patch.
    """
    dims = as_triple(tuple(dims), 'dims')
    patch = as_triple(patch, 'patch')
    stride = as_triple(stride, 'stride')
    if min(dims) < 1:
        raise ShapeError(f'cannot tile an empty volume of dims {dims}')
    if min(stride) < 1:
        raise ConfigError(f'stride must be positive, got {stride}')
    if any(s > p for s, p in zip(stride, patch)):
        raise ConfigError(f'stride {stride} must not exceed patch {patch}')
    if any(p % divisor for p in patch):
        raise ShapeError(f'patch {patch} must be divisible by {divisor}')
    padded = tuple(max(d, p) for d, p in zip(dims, patch))
    pad_before = tuple((q - d) // 2 for q, d in zip(padded, dims))
    axis_origins = tuple(_axis_origins(q, p, s) for q, p, s in zip(padded, patch, stride))
    return TilePlan(dims, patch, stride, padded, pad_before, axis_origins)  # type: ignore[arg-type]


@dataclass(eq=False)
class ProbVolume:
    """Per-voxel defect probability"""
    data: NDArray[np.float32]

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise ShapeError(f'a probability volume is 3D, got shape {self.data.shape}')
        if self.data.size and (self.data.min() < 0 or self.data.max() > 1):
            raise ValueError('probabilities must lie in [0, 1]')

    @property
    def dims(self) -> Triple:
        return self.data.shape  # type: ignore[return-value]

    def to_volume(self, spacing: float = 1.0) -> Volume:
        return Volume(self.data.astype(np.float32, copy=False), spacing=spacing)


def gaussian_weights(patch: Sequence[int]) -> NDArray[np.float64]:
    """Separable Gaussian centred on the patch, sigma = patch/8 per axis, peak 1"""
    axes = []
    for p in patch:
        offsets = np.arange(p) - (p - 1) / 2
        sigma = max(p * GAUSSIAN_SIGMA_FRACTION, 1e-6)
        axes.append(np.exp(-0.5 * (offsets / sigma) ** 2))
    weights = axes[0][:, None, None] * axes[1][None, :, None] * axes[2][None, None, :]
    return np.maximum(weights / weights.max(), GAUSSIAN_FLOOR)


def _pad(data: NDArray, plan: TilePlan) -> NDArray:
    widths = [(b, q - d - b) for b, q, d in zip(plan.pad_before, plan.padded_dims, plan.dims)]
    if not any(b or a for b, a in widths):
        return data
    mode = 'reflect' if min(plan.dims) > 1 else 'edge'
    return np.pad(data, widths, mode=mode)


def predict_volume(model: UNetModel, volume: Volume, plan: TilePlan, blend: BlendMode = 'uniform',
                   progress: bool = False) -> ProbVolume:
    """
    Eval-mode forward per tile, softmax over the two classes, defect probabilities blended
    as a weighted mean (weight 1 for 'uniform', `gaussian_weights` for 'gaussian'). Tiles are
    accumulated in plan order, so results are bit-deterministic.
    """
    if tuple(volume.dims) != plan.dims:
        raise ShapeError(f'volume dims {volume.dims} do not match the tile plan dims {plan.dims}')
    match blend:
        case 'uniform':
            weights = np.ones(plan.patch)
        case 'gaussian':
            weights = gaussian_weights(plan.patch)
        case _:
            raise ConfigError(f'unknown blend mode {blend!r}')

    padded = _pad(volume.data.astype(model.dtype), plan)
    total = np.zeros(plan.padded_dims)
    weight_sum = np.zeros(plan.padded_dims)
    get_logger().debug(f'Predicting {len(plan)} tiles of {plan.patch} over {plan.padded_dims}')
    for origin in tqdm(plan.origins, desc='tiles', disable=not progress, leave=False):
        window = plan.window(origin)
        logits = model.forward(padded[window][None, None], mode='eval')
        probs = F.softmax(logits.astype(np.float64))[0, 1]
        total[window] += weights * probs
        weight_sum[window] += weights
    blended = np.clip(plan.crop(total / weight_sum), 0.0, 1.0)
    return ProbVolume(blended.astype(np.float32))


def binarize(prob: ProbVolume, threshold: float = 0.5, spacing: float = 1.0) -> Volume:
    """Defect where probability >= threshold"""
    if not 0 < threshold < 1:
        raise ConfigError(f'threshold must lie in (0, 1), got {threshold}')
    return Volume((prob.data >= threshold).astype(np.uint8), spacing=spacing)
