from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Tuple
import numpy as np
from .exceptions import ConfigError, NonFiniteError
from .nn import Param


@dataclass(frozen=True)
class LrSchedule:
    """Step decay: the rate is multiplied by `gamma` at each milestone iteration, inclusive"""
    initial_lr: float = 2e-4
    milestones: Tuple[int, ...] = (600, 1000, 1400)
    gamma: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, 'milestones', tuple(int(m) for m in self.milestones))
        if self.initial_lr < 0:
            raise ConfigError(f'initial_lr must be non-negative, got {self.initial_lr}')
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ConfigError(f'milestones must be strictly increasing, got {list(self.milestones)}')
        if not 0 < self.gamma <= 1:
            raise ConfigError(f'gamma must be in (0, 1], got {self.gamma}')


def lr_at(iteration: int, schedule: LrSchedule) -> float:
    if iteration < 0:
        raise ValueError(f'iteration must be non-negative, got {iteration}')
    return schedule.initial_lr * schedule.gamma ** bisect_right(schedule.milestones, iteration)


@dataclass
class AdamState:
    """Step counter and hyperparameters; the moments live on each Param"""
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0

    def __post_init__(self) -> None:
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError(f'Adam betas must lie in (0, 1), got ({self.beta1}, {self.beta2})')
        if self.eps <= 0:
            raise ConfigError(f'Adam eps must be positive, got {self.eps}')


def adam_step(params: Iterable[Param], state: AdamState, lr: float, weight_decay: float = 0.0) -> None:
    """
    One Adam update with bias correction. Weight decay is coupled: `weight_decay * value`
    joins the gradient of every decaying Param before the moment updates. Gradients are
    cleared afterwards. A non-finite gradient aborts the step before anything changes.
    """
    params = list(params)
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteError(f'non-finite gradient in {p.name}', layer=p.name)

    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    for p in params:
        grad = p.grad + weight_decay * p.value if (p.decay and weight_decay) else p.grad
        p.m *= state.beta1
        p.m += (1.0 - state.beta1) * grad
        p.v *= state.beta2
        p.v += (1.0 - state.beta2) * grad * grad
        p.value -= lr * (p.m / correction1) / (np.sqrt(p.v / correction2) + state.eps)
        p.zero_grad()

