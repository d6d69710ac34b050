"""
Forward kernels and their hand-paired gradients for every layer of the 3D U-Nets.

All tensors are 5D arrays ordered (n, c, d, h, w). Kernels accumulate in the
input dtype; gradients of `f` are exact gradients of `sum(upstream * f(...))`.
Convolutions follow the cross-correlation convention (no kernel flip).
"""
import math
from typing import Sequence, Tuple
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray
from ..exceptions import ShapeError
from ..utils import as_triple
from .._types import Mode, Tensor5, Triple
from .params import NormState

_STATS_AXES = (0, 2, 3, 4)


def _check_5d(x: NDArray, name: str = 'input') -> None:
    if x.ndim != 5:
        raise ShapeError(f'{name} must be 5D (n, c, d, h, w), got shape {x.shape}')


def _per_channel(v: NDArray) -> NDArray:
    return v.reshape(1, -1, 1, 1, 1)


def conv3d_output_shape(input_shape: Sequence[int], weight_shape: Sequence[int], padding: Triple, stride: Triple) -> Tuple[int, ...]:
    n, _, *spatial = input_shape
    kernel = weight_shape[2:]
    out = tuple((s + 2 * p - k) // st + 1 for s, p, k, st in zip(spatial, padding, kernel, stride))
    return (n, weight_shape[0]) + out


def _conv_windows(x: Tensor5, kernel: Sequence[int], padding: Triple, stride: Triple) -> Tuple[Tuple[int, ...], NDArray]:
    pd, ph, pw = padding
    padded = np.pad(x, ((0, 0), (0, 0), (pd, pd), (ph, ph), (pw, pw)))
    windows = sliding_window_view(padded, tuple(kernel), axis=(2, 3, 4))
    sd, sh, sw = stride
    return padded.shape, windows[:, :, ::sd, ::sh, ::sw]


def _conv_args(x: Tensor5, weight: Tensor5, padding: int | Sequence[int], stride: int | Sequence[int]) -> Tuple[Triple, Triple]:
    _check_5d(x)
    _check_5d(weight, 'weight')
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f'input has {x.shape[1]} channels but the weight expects c_in={weight.shape[1]}')
    pad = as_triple(padding, 'padding')
    step = as_triple(stride, 'stride')
    if min(pad) < 0:
        raise ShapeError(f'padding must be non-negative, got {pad}')
    if min(step) < 1:
        raise ShapeError(f'stride must be at least 1, got {step}')
    for extent, p, k in zip(x.shape[2:], pad, weight.shape[2:]):
        if extent + 2 * p < k:
            raise ShapeError(f'kernel {tuple(weight.shape[2:])} does not fit padded input {tuple(x.shape[2:])}')
    return pad, step


def conv3d(x: Tensor5, weight: Tensor5, bias: NDArray, padding: int | Sequence[int] = 1, stride: int | Sequence[int] = 1) -> Tensor5:
    pad, step = _conv_args(x, weight, padding, stride)
    _, windows = _conv_windows(x, weight.shape[2:], pad, step)
    out = np.tensordot(windows, weight, axes=([1, 5, 6, 7], [1, 2, 3, 4]))
    out = np.moveaxis(out, 4, 1) + _per_channel(bias)
    return np.ascontiguousarray(out, dtype=x.dtype)


def conv3d_grad(x: Tensor5, weight: Tensor5, upstream: Tensor5,
                padding: int | Sequence[int] = 1, stride: int | Sequence[int] = 1) -> Tuple[Tensor5, Tensor5, NDArray]:
    """Returns (grad_input, grad_weight, grad_bias)"""
    pad, step = _conv_args(x, weight, padding, stride)
    expected = conv3d_output_shape(x.shape, weight.shape, pad, step)
    if upstream.shape != expected:
        raise ShapeError(f'upstream gradient has shape {upstream.shape}, expected {expected}')
    padded_shape, windows = _conv_windows(x, weight.shape[2:], pad, step)

    grad_bias = upstream.sum(axis=_STATS_AXES)
    grad_weight = np.tensordot(upstream, windows, axes=([0, 2, 3, 4], [0, 2, 3, 4]))

    grad_padded = np.zeros(padded_shape, dtype=x.dtype)
    od, oh, ow = upstream.shape[2:]
    sd, sh, sw = step
    kd, kh, kw = weight.shape[2:]
    for i in range(kd):
        for j in range(kh):
            for k in range(kw):
                contribution = np.tensordot(upstream, weight[:, :, i, j, k], axes=([1], [0]))
                grad_padded[:, :,
                            i:i + sd * (od - 1) + 1:sd,
                            j:j + sh * (oh - 1) + 1:sh,
                            k:k + sw * (ow - 1) + 1:sw] += np.moveaxis(contribution, 4, 1)
    pd, ph, pw = pad
    d, h, w = x.shape[2:]
    grad_input = grad_padded[:, :, pd:pd + d, ph:ph + h, pw:pw + w]
    return np.ascontiguousarray(grad_input), grad_weight.astype(x.dtype, copy=False), grad_bias


def _transposed_args(x: Tensor5, weight: Tensor5, stride: int | Sequence[int]) -> None:
    _check_5d(x)
    _check_5d(weight, 'weight')
    if tuple(weight.shape[2:]) != (2, 2, 2) or as_triple(stride, 'stride') != (2, 2, 2):
        raise ShapeError(f'transposed convolution supports only kernel 2x2x2 with stride 2, '
                         f'got kernel {tuple(weight.shape[2:])} and stride {stride}')
    if x.shape[1] != weight.shape[0]:
        raise ShapeError(f'input has {x.shape[1]} channels but the weight expects c_in={weight.shape[0]}')


def transposed_conv3d(x: Tensor5, weight: Tensor5, bias: NDArray, stride: int | Sequence[int] = 2) -> Tensor5:
    """
    Upsampling by the adjoint of a stride-2 convolution. The weight is laid out as
    (c_in, c_out, 2, 2, 2), i.e. in the layout of the stride-2 convolution mapping
    c_out channels back to c_in, so `<conv_s2(x, W), y> == <x, transposed_conv3d(y, W)>`.
    """
    _transposed_args(x, weight, stride)
    n, _, d, h, w = x.shape
    c_out = weight.shape[1]
    out = np.tensordot(x, weight, axes=([1], [0]))
    out = out.transpose(0, 4, 1, 5, 2, 6, 3, 7).reshape(n, c_out, 2 * d, 2 * h, 2 * w)
    return np.ascontiguousarray(out + _per_channel(bias), dtype=x.dtype)


def transposed_conv3d_grad(x: Tensor5, weight: Tensor5, upstream: Tensor5,
                           stride: int | Sequence[int] = 2) -> Tuple[Tensor5, Tensor5, NDArray]:
    _transposed_args(x, weight, stride)
    n, _, d, h, w = x.shape
    c_out = weight.shape[1]
    expected = (n, c_out, 2 * d, 2 * h, 2 * w)
    if upstream.shape != expected:
        raise ShapeError(f'upstream gradient has shape {upstream.shape}, expected {expected}')
    blocks = upstream.reshape(n, c_out, d, 2, h, 2, w, 2)
    grad_input = np.moveaxis(np.tensordot(blocks, weight, axes=([1, 3, 5, 7], [1, 2, 3, 4])), 4, 1)
    grad_weight = np.tensordot(x, blocks, axes=([0, 2, 3, 4], [0, 2, 4, 6]))
    grad_bias = upstream.sum(axis=_STATS_AXES)
    return np.ascontiguousarray(grad_input), grad_weight, grad_bias


def maxpool3d(x: Tensor5) -> Tuple[Tensor5, NDArray[np.intp]]:
    """
    2x2x2 max pooling with stride 2. Returns the pooled tensor and, per output voxel,
    the flat (d, h, w) index of the winning input voxel within its (n, c) slab.
    Ties go to the lowest flat index.
    """
    _check_5d(x)
    n, c, d, h, w = x.shape
    if d % 2 or h % 2 or w % 2:
        raise ShapeError(f'max pooling needs even spatial extents, got {(d, h, w)}')
    blocks = (x.reshape(n, c, d // 2, 2, h // 2, 2, w // 2, 2)
               .transpose(0, 1, 2, 4, 6, 3, 5, 7)
               .reshape(n, c, d // 2, h // 2, w // 2, 8))
    local = np.argmax(blocks, axis=-1)
    out = np.take_along_axis(blocks, local[..., None], axis=-1)[..., 0]
    i, rest = np.divmod(local, 4)
    j, k = np.divmod(rest, 2)
    od, oh, ow = np.meshgrid(np.arange(d // 2), np.arange(h // 2), np.arange(w // 2), indexing='ij')
    argmax = ((2 * od + i) * h + (2 * oh + j)) * w + (2 * ow + k)
    return np.ascontiguousarray(out), argmax


def maxpool3d_grad(upstream: Tensor5, argmax: NDArray[np.intp], input_shape: Sequence[int]) -> Tensor5:
    n, c = input_shape[:2]
    if upstream.shape != argmax.shape:
        raise ShapeError(f'upstream gradient has shape {upstream.shape}, expected {argmax.shape}')
    grad = np.zeros((n, c, math.prod(input_shape[2:])), dtype=upstream.dtype)
    np.put_along_axis(grad, argmax.reshape(n, c, -1), upstream.reshape(n, c, -1), axis=2)
    return grad.reshape(tuple(input_shape))


def relu(x: Tensor5) -> Tensor5:
    return np.maximum(x, 0)


def relu_grad(x: Tensor5, upstream: Tensor5) -> Tensor5:
    return np.where(x > 0, upstream, 0).astype(upstream.dtype, copy=False)


def _check_norm_channels(x: Tensor5, state: NormState) -> None:
    _check_5d(x)
    if x.shape[1] != state.channels:
        raise ShapeError(f'input has {x.shape[1]} channels but the norm state holds {state.channels}')


def _batch_stats(x: Tensor5, state: NormState, mode: Mode) -> Tuple[NDArray, NDArray]:
    if mode == 'train':
        return x.mean(axis=_STATS_AXES), x.var(axis=_STATS_AXES)
    if state.running_mean is None or state.running_var is None:
        raise ShapeError('eval-mode batch norm needs running statistics')
    return state.running_mean, state.running_var


def batchnorm3d(x: Tensor5, state: NormState, mode: Mode = 'train') -> Tensor5:
    """
    Batch norm over (n, d, h, w) per channel. Train mode uses batch statistics (biased
    variance) and folds them into the running statistics (unbiased variance) with
    `state.momentum`; eval mode uses the running statistics.
    """
    _check_norm_channels(x, state)
    mean, var = _batch_stats(x, state, mode)
    if mode == 'train' and state.running_mean is not None and state.running_var is not None:
        count = x.size // x.shape[1]
        unbiased = var * (count / (count - 1)) if count > 1 else var
        state.running_mean *= 1 - state.momentum
        state.running_mean += state.momentum * mean
        state.running_var *= 1 - state.momentum
        state.running_var += state.momentum * unbiased
    inv_std = 1.0 / np.sqrt(var + state.eps)
    x_hat = (x - _per_channel(mean)) * _per_channel(inv_std)
    return (_per_channel(state.gamma) * x_hat + _per_channel(state.beta)).astype(x.dtype, copy=False)


def batchnorm3d_grad(x: Tensor5, state: NormState, upstream: Tensor5, mode: Mode = 'train') -> Tuple[Tensor5, NDArray, NDArray]:
    """Returns (grad_input, grad_gamma, grad_beta); does not touch the running statistics"""
    _check_norm_channels(x, state)
    if upstream.shape != x.shape:
        raise ShapeError(f'upstream gradient has shape {upstream.shape}, expected {x.shape}')
    mean, var = (x.mean(axis=_STATS_AXES), x.var(axis=_STATS_AXES)) if mode == 'train' else _batch_stats(x, state, mode)
    inv_std = _per_channel(1.0 / np.sqrt(var + state.eps))
    x_hat = (x - _per_channel(mean)) * inv_std
    grad_beta = upstream.sum(axis=_STATS_AXES)
    grad_gamma = (upstream * x_hat).sum(axis=_STATS_AXES)
    dx_hat = upstream * _per_channel(state.gamma)
    if mode == 'train':
        count = x.size // x.shape[1]
        grad_input = inv_std / count * (count * dx_hat
                                        - dx_hat.sum(axis=_STATS_AXES, keepdims=True)
                                        - x_hat * (dx_hat * x_hat).sum(axis=_STATS_AXES, keepdims=True))
    else:
        grad_input = dx_hat * inv_std
    return grad_input.astype(x.dtype, copy=False), grad_gamma, grad_beta


def _group_view(x: Tensor5, state: NormState) -> NDArray:
    _check_norm_channels(x, state)
    per_group = state.channels_per_group
    c = x.shape[1]
    if per_group is None or per_group < 1 or c % per_group:
        raise ShapeError(f'{c} channels cannot be split into groups of {per_group} channels')
    return x.reshape(x.shape[0], c // per_group, -1)


def groupnorm3d(x: Tensor5, state: NormState) -> Tensor5:
    """Group norm over each (sample, group) block; identical in train and eval modes"""
    grouped = _group_view(x, state)
    mean = grouped.mean(axis=2, keepdims=True)
    var = grouped.var(axis=2, keepdims=True)
    x_hat = ((grouped - mean) / np.sqrt(var + state.eps)).reshape(x.shape)
    return (_per_channel(state.gamma) * x_hat + _per_channel(state.beta)).astype(x.dtype, copy=False)


def groupnorm3d_grad(x: Tensor5, state: NormState, upstream: Tensor5) -> Tuple[Tensor5, NDArray, NDArray]:
    grouped = _group_view(x, state)
    if upstream.shape != x.shape:
        raise ShapeError(f'upstream gradient has shape {upstream.shape}, expected {x.shape}')
    mean = grouped.mean(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(grouped.var(axis=2, keepdims=True) + state.eps)
    x_hat_grouped = (grouped - mean) * inv_std
    x_hat = x_hat_grouped.reshape(x.shape)
    grad_beta = upstream.sum(axis=_STATS_AXES)
    grad_gamma = (upstream * x_hat).sum(axis=_STATS_AXES)
    dx_hat = (upstream * _per_channel(state.gamma)).reshape(grouped.shape)
    count = grouped.shape[2]
    grad_input = inv_std / count * (count * dx_hat
                                    - dx_hat.sum(axis=2, keepdims=True)
                                    - x_hat_grouped * (dx_hat * x_hat_grouped).sum(axis=2, keepdims=True))
    return grad_input.reshape(x.shape).astype(x.dtype, copy=False), grad_gamma, grad_beta


def concat_channels(a: Tensor5, b: Tensor5) -> Tensor5:
    """Stacks `a`'s channels first, then `b`'s"""
    _check_5d(a, 'first input')
    _check_5d(b, 'second input')
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f'cannot concatenate {a.shape} and {b.shape}: only the channel axis may differ')
    return np.concatenate([a, b], axis=1)


def split_channels(upstream: Tensor5, channels_first: int) -> Tuple[Tensor5, Tensor5]:
    """Gradient of `concat_channels`: routes the first `channels_first` channels back to `a`"""
    if not 0 <= channels_first <= upstream.shape[1]:
        raise ShapeError(f'cannot split {channels_first} channels off a gradient with {upstream.shape[1]}')
    return upstream[:, :channels_first].copy(), upstream[:, channels_first:].copy()


def softmax(logits: Tensor5, axis: int = 1) -> Tensor5:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits: Tensor5, targets: NDArray[np.integer]) -> Tuple[float, Tensor5]:
    """
    Mean over voxels of -log softmax(logits)[target]. `targets` holds one class
    label per voxel, shaped (n, d, h, w). Returns (loss, grad_logits).
    """
    _check_5d(logits, 'logits')
    n, c = logits.shape[:2]
    expected = (n,) + logits.shape[2:]
    if targets.shape != expected:
        raise ShapeError(f'targets have shape {targets.shape}, expected {expected}')
    labels = targets.astype(np.intp)[:, None]
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ShapeError(f'target labels must lie in [0, {c - 1}]')
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    count = labels.size
    loss = float(-np.take_along_axis(log_probs, labels, axis=1).sum() / count)
    grad = np.exp(log_probs)
    np.put_along_axis(grad, labels, np.take_along_axis(grad, labels, axis=1) - 1, axis=1)
    grad /= count
    return loss, grad.astype(logits.dtype, copy=False)
