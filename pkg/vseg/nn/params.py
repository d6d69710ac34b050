from dataclasses import dataclass, field
from typing import Tuple
import numpy as np
from numpy.typing import NDArray, DTypeLike
from ..exceptions import ShapeError


@dataclass(eq=False)
class Param:
    """
    A learnable array together with its gradient accumulator and Adam moments.
    `decay=False` keeps the parameter out of weight decay (biases, norm gamma/beta).
    """
    name: str
    value: NDArray[np.floating]
    decay: bool = True
    grad: NDArray[np.floating] = field(init=False, repr=False)
    m: NDArray[np.floating] = field(init=False, repr=False)
    v: NDArray[np.floating] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return int(self.value.size)

    def zero_grad(self) -> None:
        self.grad.fill(0)


@dataclass(eq=False)
class NormState:
    """
    Per-channel affine terms and statistics of a normalization layer.
    Batch norm carries running statistics; group norm carries `channels_per_group`.
    """
    gamma: NDArray[np.floating]
    beta: NDArray[np.floating]
    running_mean: NDArray[np.floating] | None = None
    running_var: NDArray[np.floating] | None = None
    momentum: float = 0.1
    eps: float = 1e-5
    channels_per_group: int | None = None

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise ValueError(f'eps must be positive, got {self.eps}')
        if not 0 < self.momentum <= 1:
            raise ValueError(f'momentum must be in (0, 1], got {self.momentum}')
        if self.gamma.shape != self.beta.shape or self.gamma.ndim != 1:
            raise ShapeError(f'gamma {self.gamma.shape} and beta {self.beta.shape} must be equal-length vectors')

    @property
    def channels(self) -> int:
        return int(self.gamma.size)

    @classmethod
    def for_batch_norm(cls, channels: int, dtype: DTypeLike = np.float32, momentum: float = 0.1, eps: float = 1e-5) -> "NormState":
        return cls(
            gamma=np.ones(channels, dtype=dtype),
            beta=np.zeros(channels, dtype=dtype),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
            momentum=momentum,
            eps=eps
        )

    @classmethod
    def for_group_norm(cls, channels: int, channels_per_group: int = 1, dtype: DTypeLike = np.float32, eps: float = 1e-5) -> "NormState":
        return cls(
            gamma=np.ones(channels, dtype=dtype),
            beta=np.zeros(channels, dtype=dtype),
            eps=eps,
            channels_per_group=channels_per_group
        )


def he_normal(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, dtype: DTypeLike) -> NDArray[np.floating]:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
