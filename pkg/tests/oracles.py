"""
Brute-force reference implementations for the tests. Everything here is written directly
from the definitions with explicit loops, in double precision, and imports nothing from
`vseg.nn`. Shapes are expected to be tiny (spatial extents <= 16).
"""
from dataclasses import dataclass
from typing import Callable, Tuple
import numpy as np


@dataclass(frozen=True)
class FiniteDiffSpec:
    step: float = 1e-4
    tolerance: float = 1e-4
    floor: float = 1e-8

    def __post_init__(self) -> None:
        if self.step <= 0:
            raise ValueError('finite-difference step must be positive')


def rel_error(a, b, floor: float = 1e-8) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / scale)) if a.size else 0.0


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central differences of scalar `f` per coordinate of `x` (x is restored afterwards)"""
    x = np.asarray(x)
    grad = np.zeros(x.shape)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = f(x)
        flat[i] = original - step
        minus = f(x)
        flat[i] = original
        out[i] = (plus - minus) / (2 * step)
    return grad


def finite_diff_vjp(op: Callable[[np.ndarray], np.ndarray], x: np.ndarray, upstream: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Gradient of sum(upstream * op(x)); output differences are formed before the reduction"""
    x = np.asarray(x)
    grad = np.zeros(x.shape)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = np.array(op(x), dtype=np.float64)
        flat[i] = original - step
        minus = np.array(op(x), dtype=np.float64)
        flat[i] = original
        out[i] = float(np.sum(upstream * (plus - minus))) / (2 * step)
    return grad


def naive_conv3d(x, weight, bias, padding: int = 1, stride: int = 1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n, c_in, d, h, w = x.shape
    c_out, _, kd, kh, kw = weight.shape
    od = (d + 2 * padding - kd) // stride + 1
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((n, c_out, od, oh, ow))
    for b in range(n):
        for co in range(c_out):
            for z in range(od):
                for y in range(oh):
                    for v in range(ow):
                        total = float(bias[co])
                        for ci in range(c_in):
                            for i in range(kd):
                                for j in range(kh):
                                    for k in range(kw):
                                        zz = z * stride + i - padding
                                        yy = y * stride + j - padding
                                        vv = v * stride + k - padding
                                        if 0 <= zz < d and 0 <= yy < h and 0 <= vv < w:
                                            total += x[b, ci, zz, yy, vv] * float(weight[co, ci, i, j, k])
                        out[b, co, z, y, v] = total
    return out


def naive_transposed_conv3d(x, weight, bias) -> np.ndarray:
    """Kernel 2, stride 2; weight laid out (c_in, c_out, 2, 2, 2)"""
    x = np.asarray(x, dtype=np.float64)
    n, c_in, d, h, w = x.shape
    c_out = weight.shape[1]
    out = np.zeros((n, c_out, 2 * d, 2 * h, 2 * w))
    for b in range(n):
        for ci in range(c_in):
            for z in range(d):
                for y in range(h):
                    for v in range(w):
                        for co in range(c_out):
                            for i in range(2):
                                for j in range(2):
                                    for k in range(2):
                                        out[b, co, 2 * z + i, 2 * y + j, 2 * v + k] += x[b, ci, z, y, v] * float(weight[ci, co, i, j, k])
    for co in range(c_out):
        out[:, co] += float(bias[co])
    return out


def naive_maxpool3d(x) -> Tuple[np.ndarray, np.ndarray]:
    """2x2x2 stride 2; argmax as the flat (d, h, w) index, first maximum in scan order"""
    x = np.asarray(x, dtype=np.float64)
    n, c, d, h, w = x.shape
    out = np.zeros((n, c, d // 2, h // 2, w // 2))
    argmax = np.zeros(out.shape, dtype=np.int64)
    for b in range(n):
        for ch in range(c):
            for z in range(d // 2):
                for y in range(h // 2):
                    for v in range(w // 2):
                        best, best_index = None, -1
                        for i in range(2):
                            for j in range(2):
                                for k in range(2):
                                    zz, yy, vv = 2 * z + i, 2 * y + j, 2 * v + k
                                    value = x[b, ch, zz, yy, vv]
                                    index = (zz * h + yy) * w + vv
                                    if best is None or value > best or (value == best and index < best_index):
                                        best, best_index = value, index
                        out[b, ch, z, y, v] = best
                        argmax[b, ch, z, y, v] = best_index
    return out, argmax


def naive_batchnorm_train(x, gamma, beta, eps: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for ch in range(x.shape[1]):
        values = x[:, ch].ravel()
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        out[:, ch] = gamma[ch] * (x[:, ch] - mean) / np.sqrt(var + eps) + beta[ch]
    return out


def naive_groupnorm(x, gamma, beta, channels_per_group: int, eps: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n, c = x.shape[:2]
    out = np.empty_like(x)
    for b in range(n):
        for start in range(0, c, channels_per_group):
            block = x[b, start:start + channels_per_group]
            values = block.ravel()
            mean = sum(values) / len(values)
            var = sum((v - mean) ** 2 for v in values) / len(values)
            normed = (block - mean) / np.sqrt(var + eps)
            for offset in range(channels_per_group):
                ch = start + offset
                out[b, ch] = gamma[ch] * normed[offset] + beta[ch]
    return out


def naive_median3d(volume, radius: int) -> np.ndarray:
    data = np.asarray(volume)
    d, h, w = data.shape
    out = np.empty_like(data)
    for z in range(d):
        for y in range(h):
            for v in range(w):
                values = []
                for i in range(-radius, radius + 1):
                    for j in range(-radius, radius + 1):
                        for k in range(-radius, radius + 1):
                            zz = min(max(z + i, 0), d - 1)
                            yy = min(max(y + j, 0), h - 1)
                            vv = min(max(v + k, 0), w - 1)
                            values.append(data[zz, yy, vv])
                values.sort()
                out[z, y, v] = values[(len(values) - 1) // 2]
    return out


def naive_bernsen(volume, radius: int, c_min: int, low_level: int) -> np.ndarray:
    data = np.asarray(volume).astype(int)
    d, h, w = data.shape
    out = np.zeros(data.shape, dtype=np.uint8)
    for z in range(d):
        for y in range(h):
            for v in range(w):
                zmax, zmin = -1, 256
                for j in range(-radius, radius + 1):
                    for k in range(-radius, radius + 1):
                        value = data[z, min(max(y + j, 0), h - 1), min(max(v + k, 0), w - 1)]
                        zmax, zmin = max(zmax, value), min(zmin, value)
                if zmax - zmin >= c_min:
                    out[z, y, v] = 2 * data[z, y, v] < zmax + zmin
                else:
                    out[z, y, v] = zmax + zmin < 2 * low_level
    return out


def naive_nlm_slice(image, h: float, patch_radius: int, search_radius: int, sigma: float = 0.0) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    height, width = img.shape
    f, t = patch_radius, search_radius

    def at(y: int, x: int) -> float:
        return img[min(max(y, 0), height - 1), min(max(x, 0), width - 1)]

    out = np.zeros_like(img)
    for y in range(height):
        for x in range(width):
            total = weights = 0.0
            for dy in range(-t, t + 1):
                for dx in range(-t, t + 1):
                    d2 = 0.0
                    for py in range(-f, f + 1):
                        for px in range(-f, f + 1):
                            d2 += (at(y + dy + py, x + dx + px) - at(y + py, x + px)) ** 2
                    d2 /= (2 * f + 1) ** 2
                    weight = np.exp(-max(d2 - 2 * sigma ** 2, 0.0) / h ** 2)
                    total += weight * at(y + dy, x + dx)
                    weights += weight
            out[y, x] = total / weights
    return out


def tally_confusion(pred, truth) -> Tuple[int, int, int, int]:
    tp = fp = fn = tn = 0
    for p, t in zip(np.asarray(pred).ravel(), np.asarray(truth).ravel()):
        if p and t:
            tp += 1
        elif p:
            fp += 1
        elif t:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn
