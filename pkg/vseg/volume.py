import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple
import numpy as np
from numpy.typing import NDArray
from PIL import Image, UnidentifiedImageError
from .exceptions import DataError, DimsMismatchError, MalformedHeaderError, TruncatedDataError, UnknownDTypeError, ShapeError
from .color_logger import get_logger
from ._types import VolumeDType

HEADER_SUFFIX = '.vhdr'
RAW_SUFFIX = '.vol'
SLICE_SUFFIX = '.pgm'

_DTYPES: Dict[VolumeDType, np.dtype] = {
    'u8': np.dtype(np.uint8),
    'u16': np.dtype(np.uint16),
    'f32': np.dtype(np.float32),
}
_RAW_DTYPES: Dict[VolumeDType, str] = {'u8': '|u1', 'u16': '<u2', 'f32': '<f4'}


def dtype_name(dtype: np.dtype) -> VolumeDType:
    for name, known in _DTYPES.items():
        if np.dtype(dtype) == known:
            return name
    raise UnknownDTypeError(f'unsupported volume dtype {dtype}, expected one of {list(_DTYPES)}')


@dataclass(eq=False)
class Volume:
    """A (d, h, w) scalar grid; `spacing` is the distance between slices"""
    data: NDArray
    spacing: float = 1.0

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise ShapeError(f'a volume is 3D (d, h, w), got shape {self.data.shape}')
        dtype_name(self.data.dtype)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def dtype(self) -> VolumeDType:
        return dtype_name(self.data.dtype)

    def slice(self, k: int) -> NDArray:
        return self.data[k]

    def equals(self, other: "Volume") -> bool:
        return (self.data.dtype == other.data.dtype and self.dims == other.dims
                and self.spacing == other.spacing and np.array_equal(self.data, other.data))


@dataclass(eq=False)
class LabeledVolume:
    image: Volume
    mask: Volume

    def __post_init__(self) -> None:
        if self.image.dims != self.mask.dims:
            raise DimsMismatchError(f'image dims {self.image.dims} and mask dims {self.mask.dims} differ')
        if self.mask.data.size and not np.isin(self.mask.data, (0, 1)).all():
            raise DataError('mask values must be 0 (background) or 1 (defect)')

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.image.dims


def volume_paths(path: str | os.PathLike) -> Tuple[Path, Path]:
    """Maps `name`, `name.vhdr` or `name.vol` to the (header, raw) pair"""
    path = Path(path)
    if path.suffix in (HEADER_SUFFIX, RAW_SUFFIX):
        path = path.with_suffix('')
    return path.with_name(path.name + HEADER_SUFFIX), path.with_name(path.name + RAW_SUFFIX)


def save_volume(volume: Volume, path: str | os.PathLike) -> None:
    header_path, raw_path = volume_paths(path)
    header_path.parent.mkdir(parents=True, exist_ok=True)
    d, h, w = volume.dims
    header = f'dims = {d} {h} {w}\ndtype = {volume.dtype}\nspacing = {volume.spacing!r}\n'
    header_path.write_text(header, encoding='utf8')
    volume.data.astype(_RAW_DTYPES[volume.dtype], copy=False).tofile(raw_path)


def _parse_header(header_path: Path) -> Tuple[Tuple[int, int, int], VolumeDType, float]:
    try:
        text = header_path.read_text(encoding='utf8')
    except FileNotFoundError:
        raise DataError(f'missing volume header {header_path}')
    entries: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        if not sep:
            raise MalformedHeaderError(f'{header_path}:{number}: expected "key = value", got {line!r}')
        entries[key.strip()] = value.strip()
    missing = {'dims', 'dtype'} - set(entries)
    if missing:
        raise MalformedHeaderError(f'{header_path}: missing {sorted(missing)}')
    try:
        dims = tuple(int(v) for v in entries['dims'].split())
        spacing = float(entries.get('spacing', '1.0'))
    except ValueError as e:
        raise MalformedHeaderError(f'{header_path}: {e}')
    if len(dims) != 3 or min(dims) < 0:
        raise MalformedHeaderError(f'{header_path}: dims must be three non-negative integers, got {entries["dims"]!r}')
    dtype = entries['dtype']
    if dtype not in _DTYPES:
        raise UnknownDTypeError(f'{header_path}: unknown dtype {dtype!r}, expected one of {list(_DTYPES)}')
    return dims, dtype, spacing  # type: ignore[return-value]


def load_volume(path: str | os.PathLike) -> Volume:
    header_path, raw_path = volume_paths(path)
    dims, dtype, spacing = _parse_header(header_path)
    raw_dtype = np.dtype(_RAW_DTYPES[dtype])
    expected = int(np.prod(dims)) * raw_dtype.itemsize
    try:
        raw = raw_path.read_bytes()
    except FileNotFoundError:
        raise DataError(f'missing volume data {raw_path}')
    if len(raw) < expected:
        raise TruncatedDataError(f'{raw_path}: truncated data, expected {expected} bytes, found {len(raw)}')
    if len(raw) > expected:
        raise MalformedHeaderError(f'{raw_path}: {len(raw) - expected} bytes beyond the {dims} {dtype} grid in the header')
    data = np.frombuffer(raw, dtype=raw_dtype).astype(_DTYPES[dtype]).reshape(dims)
    return Volume(data, spacing=spacing)


def read_pgm(path: str | os.PathLike) -> NDArray:
    """Reads an 8-bit or 16-bit single-channel binary PGM ("P5") slice"""
    try:
        with Image.open(path) as img:
            if img.format != 'PPM' or img.mode not in ('L', 'I', 'I;16', 'I;16B'):
                raise DataError(f'{path}: expected a single-channel PGM slice, got {img.format} {img.mode}')
            data = np.asarray(img)
            mode = img.mode
    except (UnidentifiedImageError, OSError) as e:
        raise DataError(f'{path}: cannot read slice ({e})')
    return data.astype(np.uint8 if mode == 'L' else np.uint16)


def write_pgm(data: NDArray, path: str | os.PathLike) -> None:
    if data.ndim != 2 or data.dtype not in (np.uint8, np.uint16):
        raise DataError(f'PGM slices are 2D u8 or u16, got {data.dtype} {data.shape}')
    # 32-bit "I" images are written as 16-bit P5 with maxval 65535
    pixels = data.astype(np.int32) if data.dtype == np.uint16 else np.ascontiguousarray(data)
    Image.fromarray(pixels).save(path, format='PPM')


def list_slices(directory: str | os.PathLike) -> List[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == SLICE_SUFFIX)


def stack_slices(slice_paths: Sequence[str | os.PathLike], spacing: float = 1.0) -> Volume:
    """Stacks slices in list order along depth; slice k becomes depth index k"""
    if not slice_paths:
        raise DataError('no slices to stack')
    slices: List[NDArray] = []
    for path in slice_paths:
        data = read_pgm(path)
        if slices and (data.shape != slices[0].shape or data.dtype != slices[0].dtype):
            raise DataError(f'{path}: slice is {data.dtype} {data.shape} but {slice_paths[0]} is {slices[0].dtype} {slices[0].shape}')
        slices.append(data)
    get_logger().debug(f'Stacked {len(slices)} slices of {slices[0].shape} {slices[0].dtype}')
    return Volume(np.stack(slices), spacing=spacing)


def export_slices(volume: Volume, directory: str | os.PathLike, prefix: str = 'slice') -> List[Path]:
    """Writes one 8-bit PGM per depth index with zero-padded names; float volumes are read as [0, 1]"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data = volume.data
    if data.dtype == np.float32:
        data = np.floor(np.clip(data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    elif data.dtype == np.uint16:
        data = (data >> 8).astype(np.uint8)
    width = max(4, len(str(max(volume.dims[0] - 1, 0))))
    paths = []
    for k, plane in enumerate(data):
        path = directory / f'{prefix}_{k:0{width}d}{SLICE_SUFFIX}'
        write_pgm(plane, path)
        paths.append(path)
    return paths
