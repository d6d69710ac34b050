from typing import Literal, TypeAlias, Tuple
import numpy as np
from numpy.typing import NDArray


Tensor5: TypeAlias = NDArray[np.floating]
Triple: TypeAlias = Tuple[int, int, int]

Mode: TypeAlias = Literal['train', 'eval']

VariantKind: TypeAlias = Literal[
    'conv_bn_relu',
    'conv_relu_gn',
    'residual_symmetric'
]

VolumeDType: TypeAlias = Literal['u8', 'u16', 'f32']
FloatDType: TypeAlias = Literal['float32', 'float64']
Normalization: TypeAlias = Literal['zscore', 'minmax']
BlendMode: TypeAlias = Literal['uniform', 'gaussian']
SpecimenRole: TypeAlias = Literal['training', 'validation']

Color: TypeAlias = Literal[
    "red",
    "green",
    "yellow",
    "blue",
    "magenta",
    "cyan"
]
