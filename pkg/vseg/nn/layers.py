from typing import List
import numpy as np
from numpy.typing import DTypeLike, NDArray
from .._types import Mode, Tensor5
from . import functional as F
from .layer_interface import Layer
from .params import Param, NormState, he_normal


class Conv3d(Layer):
    def __init__(self, name: str, in_channels: int, out_channels: int, *,
                 kernel: int = 3, rng: np.random.Generator, dtype: DTypeLike = np.float32) -> None:
        super().__init__(name)
        self.padding = kernel // 2
        fan_in = in_channels * kernel ** 3
        self.weight = Param(f'{name}.weight', he_normal(rng, (out_channels, in_channels, kernel, kernel, kernel), fan_in, dtype))
        self.bias = Param(f'{name}.bias', np.zeros(out_channels, dtype=dtype), decay=False)

    def params(self) -> List[Param]:
        return [self.weight, self.bias]

    def forward(self, x: Tensor5, mode: Mode) -> Tensor5:
        self._retain(mode, x=x)
        return F.conv3d(x, self.weight.value, self.bias.value, padding=self.padding)

    def backward(self, upstream: Tensor5) -> Tensor5:
        x = self._release()['x']
        grad_input, grad_weight, grad_bias = F.conv3d_grad(x, self.weight.value, upstream, padding=self.padding)
        self.weight.grad += grad_weight
        self.bias.grad += grad_bias
        return grad_input


class TransposedConv3d(Layer):
    """2x2x2 stride-2 upsampling; He init uses fan_in = in_channels (one tap per input channel reaches each output voxel)"""
    def __init__(self, name: str, in_channels: int, out_channels: int, *,
                 rng: np.random.Generator, dtype: DTypeLike = np.float32) -> None:
        super().__init__(name)
        self.weight = Param(f'{name}.weight', he_normal(rng, (in_channels, out_channels, 2, 2, 2), in_channels, dtype))
        self.bias = Param(f'{name}.bias', np.zeros(out_channels, dtype=dtype), decay=False)

    def params(self) -> List[Param]:
        return [self.weight, self.bias]

    def forward(self, x: Tensor5, mode: Mode) -> Tensor5:
        self._retain(mode, x=x)
        return F.transposed_conv3d(x, self.weight.value, self.bias.value)

    def backward(self, upstream: Tensor5) -> Tensor5:
        x = self._release()['x']
        grad_input, grad_weight, grad_bias = F.transposed_conv3d_grad(x, self.weight.value, upstream)
        self.weight.grad += grad_weight
        self.bias.grad += grad_bias
        return grad_input


class MaxPool3d(Layer):
    def forward(self, x: Tensor5, mode: Mode) -> Tensor5:
        out, argmax = F.maxpool3d(x)
        self._retain(mode, argmax=argmax, shape=x.shape)
        return out

    def backward(self, upstream: Tensor5) -> Tensor5:
        cache = self._release()
        return F.maxpool3d_grad(upstream, cache['argmax'], cache['shape'])


class ReLU(Layer):
    def forward(self, x: Tensor5, mode: Mode) -> Tensor5:
        self._retain(mode, x=x)
        return F.relu(x)

    def backward(self, upstream: Tensor5) -> Tensor5:
        return F.relu_grad(self._release()['x'], upstream)


class _Norm(Layer):
    def __init__(self, name: str, state: NormState) -> None:
        super().__init__(name)
        self.state = state
        # the params own the arrays the state reads, so optimizer updates are seen in place
        self.gamma = Param(f'{name}.gamma', state.gamma, decay=False)
        self.beta = Param(f'{name}.beta', state.beta, decay=False)

    def params(self) -> List[Param]:
        return [self.gamma, self.beta]


class BatchNorm3d(_Norm):
    def __init__(self, name: str, channels: int, *, momentum: float = 0.1, eps: float = 1e-5, dtype: DTypeLike = np.float32) -> None:
        super().__init__(name, NormState.for_batch_norm(channels, dtype=dtype, momentum=momentum, eps=eps))

    def buffers(self) -> List[NDArray[np.floating]]:
        return [self.state.running_mean, self.state.running_var]  # type: ignore[list-item]

    def forward(self, x: Tensor5, mode: Mode) -> Tensor5:
        self._retain(mode, x=x)
        return F.batchnorm3d(x, self.state, mode)

    def backward(self, upstream: Tensor5) -> Tensor5:
        x = self._release()['x']
        grad_input, grad_gamma, grad_beta = F.batchnorm3d_grad(x, self.state, upstream, mode='train')
        self.gamma.grad += grad_gamma
        self.beta.grad += grad_beta
        return grad_input


class GroupNorm3d(_Norm):
    def __init__(self, name: str, channels: int, *, channels_per_group: int = 1, eps: float = 1e-5, dtype: DTypeLike = np.float32) -> None:
        super().__init__(name, NormState.for_group_norm(channels, channels_per_group=channels_per_group, dtype=dtype, eps=eps))

    def forward(self, x: Tensor5, mode: Mode) -> Tensor5:
        self._retain(mode, x=x)
        return F.groupnorm3d(x, self.state)

    def backward(self, upstream: Tensor5) -> Tensor5:
        x = self._release()['x']
        grad_input, grad_gamma, grad_beta = F.groupnorm3d_grad(x, self.state, upstream)
        self.gamma.grad += grad_gamma
        self.beta.grad += grad_beta
        return grad_input
