"""
Procedural stand-in for XCT scans of additively manufactured parts: dark ellipsoidal
pores in bright material, blurred and noised like a reconstructed scan.
"""
from dataclasses import dataclass, replace
from typing import List, Tuple
import numpy as np
from numpy.typing import NDArray
from scipy import ndimage
from .exceptions import ConfigError
from .color_logger import get_logger
from .volume import Volume, LabeledVolume
from .data import porosity
from ._types import SpecimenRole

POROSITY_SPAN = (0.0037, 0.1928)
MAX_POROSITY = 0.25
OVERSHOOT = 1.2
_SHRINK = 0.7
_MAX_SHRINKS = 8


@dataclass(frozen=True)
class Specimen:
    name: str
    spacing: float
    porosity: float
    role: SpecimenRole


SPECIMEN_TABLE: Tuple[Specimen, ...] = (
    Specimen('sample1', 0.00245, 0.0101, 'validation'),
    Specimen('sample2', 0.00277, 0.1928, 'training'),
    Specimen('sample3', 0.00243, 0.0037, 'training'),
    Specimen('sample4', 0.00252, 0.1101, 'training'),
)


@dataclass(frozen=True)
class SynthSpec:
    dims: Tuple[int, int, int] = (64, 64, 64)
    target_porosity: float = 0.05
    radius_range: Tuple[float, float] = (2.0, 5.0)
    elongation_range: Tuple[float, float] = (1.0, 2.0)
    material_gray: int = 200
    pore_gray: int = 50
    noise_sigma: float = 10.0
    blur_sigma: float = 0.8
    spacing: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ConfigError(f'dims must be three positive extents, got {self.dims}')
        if not 0 < self.target_porosity < MAX_POROSITY:
            raise ConfigError(f'target porosity must lie in (0, {MAX_POROSITY}), got {self.target_porosity}')
        r_lo, r_hi = self.radius_range
        if not 0 < r_lo <= r_hi:
            raise ConfigError(f'pore radius range must satisfy 0 < min <= max, got {self.radius_range}')
        if r_lo > min(self.dims):
            raise ConfigError(f'pore radius {r_lo} exceeds volume dims {self.dims}')
        e_lo, e_hi = self.elongation_range
        if not 1 <= e_lo <= e_hi:
            raise ConfigError(f'elongation range must satisfy 1 <= min <= max, got {self.elongation_range}')
        for name, gray in (('material_gray', self.material_gray), ('pore_gray', self.pore_gray)):
            if not 0 <= gray <= 255:
                raise ConfigError(f'{name} must be a u8 gray level, got {gray}')
        if self.noise_sigma < 0 or self.blur_sigma < 0:
            raise ConfigError('noise and blur sigmas must be non-negative')


def _random_rotation(rng: np.random.Generator) -> NDArray[np.float64]:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    return q * np.sign(np.diag(r))


def _ellipsoid(dims: Tuple[int, int, int], center: NDArray, radii: NDArray, rotation: NDArray) -> Tuple[Tuple[slice, ...], NDArray[np.bool_]]:
    """Bounding-box slices and the voxels of the box inside the rotated ellipsoid"""
    reach = float(radii.max())
    lo = [max(int(np.floor(c - reach)), 0) for c in center]
    hi = [min(int(np.ceil(c + reach)) + 1, d) for c, d in zip(center, dims)]
    box = tuple(slice(a, b) for a, b in zip(lo, hi))
    grids = np.meshgrid(*(np.arange(a, b) for a, b in zip(lo, hi)), indexing='ij')
    offsets = np.stack([g - c for g, c in zip(grids, center)], axis=-1)
    local = offsets @ rotation
    return box, ((local / radii) ** 2).sum(axis=-1) <= 1.0


def _grow_pores(spec: SynthSpec, rng: np.random.Generator) -> NDArray[np.uint8]:
    dims = spec.dims
    mask = np.zeros(dims, dtype=bool)
    total = mask.size
    target = spec.target_porosity * total
    ceiling = OVERSHOOT * target
    count = 0
    while count < target:
        center = np.array([rng.uniform(0, d) for d in dims]) - 0.5
        radius = rng.uniform(*spec.radius_range)
        radii = np.full(3, radius)
        radii[int(rng.integers(0, 3))] *= rng.uniform(*spec.elongation_range)
        rotation = _random_rotation(rng)
        for _ in range(_MAX_SHRINKS):
            box, inside = _ellipsoid(dims, center, np.maximum(radii, 0.5), rotation)
            added = int(np.count_nonzero(inside & ~mask[box]))
            if count + added <= ceiling:
                break
            radii = radii * _SHRINK
        else:
            voxel = tuple(int(np.clip(np.rint(c), 0, d - 1)) for c, d in zip(center, dims))
            box = tuple(slice(v, v + 1) for v in voxel)
            inside = np.ones((1, 1, 1), dtype=bool)
            added = int(not mask[voxel])
        mask[box] |= inside
        count += added
    return mask.astype(np.uint8)


def synth_generate(spec: SynthSpec) -> LabeledVolume:
    """
    Places random ellipsoidal pores until the porosity reaches the target (without passing
    1.2x the target), renders material/pore gray levels, then blurs, noises and clamps to u8.
    Deterministic per `spec.seed`.
    """
    spec.validate()
    lo, hi = POROSITY_SPAN
    if not lo <= spec.target_porosity <= hi:
        get_logger().warning(f'Target porosity {spec.target_porosity} lies outside the {lo}-{hi} span of the reference specimens')
    rng = np.random.default_rng(spec.seed)
    mask = _grow_pores(spec, rng)
    image = np.where(mask == 1, float(spec.pore_gray), float(spec.material_gray))
    if spec.blur_sigma > 0:
        image = ndimage.gaussian_filter(image, sigma=spec.blur_sigma, mode='nearest')
    if spec.noise_sigma > 0:
        image = image + rng.normal(0.0, spec.noise_sigma, size=image.shape)
    image = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    get_logger().debug(f'Synthesized {spec.dims} volume with porosity {porosity(mask):.4f} (target {spec.target_porosity})')
    return LabeledVolume(Volume(image, spacing=spec.spacing), Volume(mask, spacing=spec.spacing))


def generate_specimens(base: SynthSpec, specimens: Tuple[Specimen, ...] = SPECIMEN_TABLE) -> List[Tuple[Specimen, LabeledVolume]]:
    """One synthetic volume per specimen, porosity and slice spacing taken from the specimen, seeds offset by index"""
    out = []
    for index, specimen in enumerate(specimens):
        spec = replace(base, target_porosity=specimen.porosity, spacing=specimen.spacing, seed=base.seed + index)
        out.append((specimen, synth_generate(spec)))
    return out
