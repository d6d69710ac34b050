from abc import abstractmethod
from typing import Any, Dict, List
import numpy as np
from numpy.typing import NDArray
from ..exceptions import BackwardWithoutForwardError
from .._types import Mode, Tensor5
from .params import Param


class Layer:
    def __init__(self, name: str) -> None:
        self.name = name
        self._cache: Dict[str, Any] | None = None

    def params(self) -> List[Param]:
        return []

    def buffers(self) -> List[NDArray[np.floating]]:
        return []

    @abstractmethod
    def forward(self, x: Tensor5, mode: Mode) -> Tensor5:
        raise NotImplementedError()

    @abstractmethod
    def backward(self, upstream: Tensor5) -> Tensor5:
        raise NotImplementedError()

    def _retain(self, mode: Mode, **cache: Any) -> None:
        self._cache = cache if mode == 'train' else None

    def _release(self) -> Dict[str, Any]:
        if self._cache is None:
            raise BackwardWithoutForwardError(f'{self.name}: backward called without a matching train-mode forward')
        cache, self._cache = self._cache, None
        return cache

    def __repr__(self) -> str:
        return f'{type(self).__name__}({self.name})'
