from .params import Param, NormState
from .layer_interface import Layer
from .layers import Conv3d, TransposedConv3d, MaxPool3d, ReLU, BatchNorm3d, GroupNorm3d

__all__ = [
    "Param",
    "NormState",
    "Layer",
    "Conv3d",
    "TransposedConv3d",
    "MaxPool3d",
    "ReLU",
    "BatchNorm3d",
    "GroupNorm3d",
]
