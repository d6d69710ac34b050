"""
Checkpoint file layout (all little-endian):

    b"VSEG1"
    u32 length, then that many bytes of UTF-8 JSON holding the model config
    every Param of the registry, in order, as f4
    every norm running statistic, in order, as f4
    u8 flag; when 1: u64 Adam step, u64 training iteration, 3 x f8 (beta1, beta2, eps),
    then all first moments and all second moments as f4 in Param order
"""
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List
import numpy as np
from numpy.typing import NDArray
from .exceptions import CheckpointMismatchError, ConfigError, DataError
from .optim import AdamState
from .unet import UNetConfig, UNetModel

MAGIC = b'VSEG1'
_F4 = np.dtype('<f4')


@dataclass
class Checkpoint:
    model: UNetModel
    adam: AdamState | None = None
    iteration: int = 0


def _f4_bytes(arrays: List[NDArray]) -> bytes:
    return b''.join(a.astype(_F4).tobytes() for a in arrays)


def checkpoint_bytes(model: UNetModel, adam: AdamState | None = None, iteration: int = 0) -> bytes:
    record = json.dumps(model.config.as_dict(), sort_keys=True).encode('utf8')
    params = model.params()
    chunks = [MAGIC, struct.pack('<I', len(record)), record,
              _f4_bytes([p.value for p in params]), _f4_bytes(model.buffers())]
    if adam is None:
        chunks.append(b'\x00')
    else:
        chunks.append(b'\x01')
        chunks.append(struct.pack('<QQddd', adam.t, iteration, adam.beta1, adam.beta2, adam.eps))
        chunks.append(_f4_bytes([p.m for p in params]))
        chunks.append(_f4_bytes([p.v for p in params]))
    return b''.join(chunks)


def save_checkpoint(path: str | os.PathLike, model: UNetModel, adam: AdamState | None = None, iteration: int = 0) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(model, adam, iteration))


class _Reader:
    def __init__(self, raw: bytes, source: str) -> None:
        self.raw = raw
        self.source = source
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.raw):
            raise DataError(f'{self.source}: truncated checkpoint')
        chunk = self.raw[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def fill(self, targets: List[NDArray]) -> None:
        for target in targets:
            values = np.frombuffer(self.take(target.size * _F4.itemsize), dtype=_F4)
            target[...] = values.reshape(target.shape)


def load_checkpoint(path: str | os.PathLike, expected: UNetConfig | None = None) -> Checkpoint:
    """
    Rebuilds the model from the stored config and fills in weights, running statistics and,
    when present, the optimizer state. A stored config differing from `expected` is rejected.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise DataError(f'missing checkpoint {path}')
    reader = _Reader(raw, str(path))
    if reader.take(len(MAGIC)) != MAGIC:
        raise DataError(f'{path}: not a vseg checkpoint')
    (length,) = struct.unpack('<I', reader.take(4))
    try:
        config = UNetConfig.from_dict(json.loads(reader.take(length).decode('utf8')))
        config.validate()
    except (UnicodeDecodeError, json.JSONDecodeError, TypeError, ConfigError) as e:
        raise DataError(f'{path}: unreadable config record ({e})')
    if expected is not None and config != expected:
        raise CheckpointMismatchError(f'{path}: checkpoint config {config.as_dict()} does not match {expected.as_dict()}')

    model = UNetModel(config)
    params = model.params()
    reader.fill([p.value for p in params])
    reader.fill(model.buffers())
    adam, iteration = None, 0
    if reader.take(1) == b'\x01':
        t, iteration, beta1, beta2, eps = struct.unpack('<QQddd', reader.take(40))
        adam = AdamState(beta1=beta1, beta2=beta2, eps=eps, t=t)
        reader.fill([p.m for p in params])
        reader.fill([p.v for p in params])
    if reader.offset != len(raw):
        raise DataError(f'{path}: {len(raw) - reader.offset} unexpected trailing bytes')
    return Checkpoint(model, adam, int(iteration))
