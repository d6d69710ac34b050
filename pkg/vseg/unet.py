import copy
from dataclasses import dataclass, asdict, fields
from typing import Any, Dict, List, Protocol, Sequence, get_args
import numpy as np
from numpy.typing import NDArray
from .exceptions import ConfigError, ShapeError, BackwardWithoutForwardError
from .nn import functional as F
from .nn import Layer, Param, Conv3d, TransposedConv3d, MaxPool3d, ReLU, BatchNorm3d, GroupNorm3d
from ._types import Mode, Tensor5, VariantKind, FloatDType

MAX_CHANNELS = 1 << 16

VARIANT_TITLES: Dict[VariantKind, str] = {
    'conv_bn_relu': '3D U-Net with Conv+BN+ReLU',
    'conv_relu_gn': '3D U-Net with Conv+ReLU+GN',
    'residual_symmetric': 'Residual Symmetric 3D U-Net',
}


@dataclass
class UNetConfig:
    in_channels: int = 1
    out_channels: int = 2
    levels: int = 4
    base_channels: int = 32
    variant: VariantKind = 'conv_bn_relu'
    gn_channels_per_group: int = 1
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    gn_eps: float = 1e-5
    dtype: FloatDType = 'float32'

    def validate(self) -> None:
        if self.variant not in get_args(VariantKind):
            raise ConfigError(f'unknown variant {self.variant!r}, expected one of {get_args(VariantKind)}')
        if self.dtype not in get_args(FloatDType):
            raise ConfigError(f'unknown dtype {self.dtype!r}, expected one of {get_args(FloatDType)}')
        if self.levels < 2:
            raise ConfigError(f'a U-Net needs at least 2 levels, got {self.levels}')
        if min(self.in_channels, self.out_channels, self.base_channels) < 1:
            raise ConfigError('channel counts must be positive')
        if self.base_channels << (self.levels - 1) > MAX_CHANNELS:
            raise ConfigError(f'{self.base_channels} base channels over {self.levels} levels exceeds {MAX_CHANNELS} channels')
        if self.variant != 'conv_bn_relu':
            per_group = self.gn_channels_per_group
            if per_group < 1 or self.base_channels % per_group:
                raise ConfigError(f'gn_channels_per_group={per_group} must divide base_channels={self.base_channels}')

    @property
    def divisor(self) -> int:
        return 1 << (self.levels - 1)

    def channels_at(self, level: int) -> int:
        return self.base_channels << level

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "UNetConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f'unknown model config keys: {sorted(unknown)}')
        return cls(**values)


class Block(Protocol):
    def forward(self, x: Tensor5, mode: Mode) -> Tensor5: ...
    def backward(self, upstream: Tensor5) -> Tensor5: ...


class Sequential:
    def __init__(self, layers: Sequence["Layer | Sequential"]) -> None:
        self.layers = list(layers)

    def forward(self, x: Tensor5, mode: Mode) -> Tensor5:
        for layer in self.layers:
            x = layer.forward(x, mode)
        return x

    def backward(self, upstream: Tensor5) -> Tensor5:
        for layer in reversed(self.layers):
            upstream = layer.backward(upstream)
        return upstream


class ResidualModule:
    """
    conv-GN-ReLU, conv-GN-ReLU, conv-GN, then the module input (projected by a 1x1x1 conv
    when channel counts differ) is added before the final ReLU
    """
    def __init__(self, body: Sequential, projection: Conv3d | None, activation: ReLU) -> None:
        self.body = body
        self.projection = projection
        self.activation = activation

    def forward(self, x: Tensor5, mode: Mode) -> Tensor5:
        skip = self.projection.forward(x, mode) if self.projection else x
        return self.activation.forward(self.body.forward(x, mode) + skip, mode)

    def backward(self, upstream: Tensor5) -> Tensor5:
        grad = self.activation.backward(upstream)
        grad_skip = self.projection.backward(grad) if self.projection else grad
        return self.body.backward(grad) + grad_skip


class UNetModel:
    """
    Encoder levels of `base_channels * 2**level` features joined by 2x2x2 max pooling,
    decoder levels that upsample with a transposed conv, concatenate the matching encoder
    output (encoder channels first) and convolve, and a final 1x1x1 conv to `out_channels`.
    `registry` lists every leaf layer in construction order.
    """
    def __init__(self, config: UNetConfig, seed: int = 0) -> None:
        config.validate()
        self.config = config
        self.registry: Dict[str, Layer] = {}
        self._dtype = np.dtype(config.dtype)
        self._rng = np.random.default_rng(seed)
        self._skip_channels: List[int] = []
        self._awaiting_backward = False

        levels = config.levels
        self.encoders: List[Block] = []
        self.pools: List[MaxPool3d] = []
        in_channels = config.in_channels
        for level in range(levels):
            out_channels = config.channels_at(level)
            self.encoders.append(self._level_block(f'enc{level}', in_channels, out_channels))
            if level < levels - 1:
                self.pools.append(self._register(MaxPool3d(f'enc{level}.pool')))
            in_channels = out_channels

        self.upsamplers: List[TransposedConv3d] = []
        self.decoders: List[Block] = []
        for level in reversed(range(levels - 1)):
            out_channels = config.channels_at(level)
            self.upsamplers.append(self._register(
                TransposedConv3d(f'dec{level}.up', in_channels, out_channels, rng=self._rng, dtype=self._dtype)))
            self.decoders.append(self._level_block(f'dec{level}', 2 * out_channels, out_channels))
            in_channels = out_channels

        self.head = self._register(Conv3d('head', in_channels, config.out_channels, kernel=1, rng=self._rng, dtype=self._dtype))

    def _register(self, layer: Layer) -> Any:
        if layer.name in self.registry:
            raise ValueError(f'duplicate layer name {layer.name}')
        self.registry[layer.name] = layer
        return layer

    def _conv(self, name: str, in_channels: int, out_channels: int, kernel: int = 3) -> Conv3d:
        return self._register(Conv3d(name, in_channels, out_channels, kernel=kernel, rng=self._rng, dtype=self._dtype))

    def _group_norm(self, name: str, channels: int) -> GroupNorm3d:
        return self._register(GroupNorm3d(name, channels, channels_per_group=self.config.gn_channels_per_group,
                                          eps=self.config.gn_eps, dtype=self._dtype))

    def _conv_module(self, name: str, in_channels: int, out_channels: int) -> Sequential:
        conv = self._conv(f'{name}.conv', in_channels, out_channels)
        if self.config.variant == 'conv_bn_relu':
            norm: Layer = self._register(BatchNorm3d(f'{name}.bn', out_channels, momentum=self.config.bn_momentum,
                                                     eps=self.config.bn_eps, dtype=self._dtype))
            return Sequential([conv, norm, self._register(ReLU(f'{name}.relu'))])
        activation = self._register(ReLU(f'{name}.relu'))
        return Sequential([conv, activation, self._group_norm(f'{name}.gn', out_channels)])

    def _residual_module(self, name: str, in_channels: int, out_channels: int) -> ResidualModule:
        stages: List[Layer] = []
        channels = in_channels
        for stage in range(3):
            stages.append(self._conv(f'{name}.stage{stage}.conv', channels, out_channels))
            stages.append(self._group_norm(f'{name}.stage{stage}.gn', out_channels))
            if stage < 2:
                stages.append(self._register(ReLU(f'{name}.stage{stage}.relu')))
            channels = out_channels
        projection = self._conv(f'{name}.skip', in_channels, out_channels, kernel=1) if in_channels != out_channels else None
        return ResidualModule(Sequential(stages), projection, self._register(ReLU(f'{name}.relu')))

    def _level_block(self, name: str, in_channels: int, out_channels: int) -> Block:
        if self.config.variant == 'residual_symmetric':
            return self._residual_module(f'{name}.res', in_channels, out_channels)
        return Sequential([
            self._conv_module(f'{name}.a', in_channels, out_channels),
            self._conv_module(f'{name}.b', out_channels, out_channels)
        ])

    @property
    def dtype(self) -> np.dtype:
        return self._dtype

    def params(self) -> List[Param]:
        return [p for layer in self.registry.values() for p in layer.params()]

    def buffers(self) -> List[NDArray[np.floating]]:
        return [b for layer in self.registry.values() for b in layer.buffers()]

    def clone(self) -> "UNetModel":
        return copy.deepcopy(self)

    def forward(self, x: Tensor5, mode: Mode = 'eval') -> Tensor5:
        if x.ndim != 5:
            raise ShapeError(f'input must be 5D (n, c, d, h, w), got shape {x.shape}')
        if x.shape[1] != self.config.in_channels:
            raise ShapeError(f'input has {x.shape[1]} channels but the model expects {self.config.in_channels}')
        divisor = self.config.divisor
        if any(extent % divisor for extent in x.shape[2:]):
            raise ShapeError(f'spatial extents {tuple(x.shape[2:])} must be divisible by {divisor} for {self.config.levels} levels')

        h = x.astype(self._dtype, copy=False)
        skips: List[Tensor5] = []
        for level, encoder in enumerate(self.encoders):
            h = encoder.forward(h, mode)
            if level < len(self.pools):
                skips.append(h)
                h = self.pools[level].forward(h, mode)
        self._skip_channels = []
        for upsampler, decoder in zip(self.upsamplers, self.decoders):
            skip = skips.pop()
            self._skip_channels.append(skip.shape[1])
            h = decoder.forward(F.concat_channels(skip, upsampler.forward(h, mode)), mode)
        self._awaiting_backward = mode == 'train'
        return self.head.forward(h, mode)

    def backward(self, grad_logits: Tensor5) -> Tensor5:
        """Accumulates parameter gradients and returns the gradient w.r.t. the network input"""
        if not self._awaiting_backward:
            raise BackwardWithoutForwardError('backward needs a preceding train-mode forward')
        self._awaiting_backward = False
        grad = self.head.backward(grad_logits.astype(self._dtype, copy=False))
        skip_grads: List[Tensor5] = []
        for upsampler, decoder, channels in reversed(list(zip(self.upsamplers, self.decoders, self._skip_channels))):
            grad_skip, grad_up = F.split_channels(decoder.backward(grad), channels)
            skip_grads.append(grad_skip)
            grad = upsampler.backward(grad_up)
        for level in reversed(range(len(self.encoders))):
            if level < len(self.pools):
                grad = self.pools[level].backward(grad) + skip_grads.pop()
            grad = self.encoders[level].backward(grad)
        return grad

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()


def build_model(config: UNetConfig, seed: int = 0) -> UNetModel:
    return UNetModel(config, seed)


def forward(model: UNetModel, x: Tensor5, mode: Mode = 'eval') -> Tensor5:
    return model.forward(x, mode)


def backward(model: UNetModel, grad_logits: Tensor5) -> Tensor5:
    return model.backward(grad_logits)


class _HasParams(Protocol):
    def params(self) -> List[Param]: ...


def count_params(model: _HasParams) -> int:
    return sum(p.size for p in model.params())
