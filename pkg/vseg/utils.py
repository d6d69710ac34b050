import numbers
from importlib import resources
from typing import Sequence, Tuple
from .exceptions import ShapeError
from ._types import Triple


def path_to_resource(filename: str) -> str:
    return str(resources.files('vseg').joinpath('resources', filename))


def as_triple(value: int | Sequence[int], name: str) -> Triple:
    if isinstance(value, numbers.Integral):
        return (int(value), int(value), int(value))
    values: Tuple[int, ...] = tuple(int(v) for v in value)
    if len(values) != 3:
        raise ShapeError(f'{name} needs 3 entries (d, h, w), got {len(values)}')
    return values  # type: ignore[return-value]
