from dataclasses import dataclass
from typing import Dict, List, Tuple
import numpy as np
from numpy.typing import NDArray
from .exceptions import DataError, DimsMismatchError
from .data import porosity
from .volume import Volume
from ._types import VariantKind

# Mean IOU on the held-out CoCr specimen and average GPU training hours reported for the
# full-resolution models; printed for reference only
REFERENCE_MEAN_IOU: Dict[VariantKind, float] = {
    'conv_bn_relu': 0.863,
    'conv_relu_gn': 0.881,
    'residual_symmetric': 0.884,
}
REFERENCE_GPU_HOURS: Dict[VariantKind, float] = {
    'conv_bn_relu': 6.58,
    'conv_relu_gn': 14.00,
    'residual_symmetric': 19.97,
}


@dataclass(frozen=True)
class Confusion:
    """Voxel counts with defect as the positive class"""
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError(f'confusion counts must be non-negative, got {self}')

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class IouReport:
    iou_defect: float
    iou_background: float
    mean_iou: float

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.iou_defect, self.iou_background, self.mean_iou


def _as_mask(mask: Volume | NDArray) -> NDArray:
    data = mask.data if isinstance(mask, Volume) else np.asarray(mask)
    if data.size and not np.isin(data, (0, 1)).all():
        raise DataError('masks must be binary (0 background, 1 defect)')
    return data.astype(bool)


def confusion_counts(pred: Volume | NDArray, truth: Volume | NDArray) -> Confusion:
    pred, truth = _as_mask(pred), _as_mask(truth)
    if pred.shape != truth.shape:
        raise DimsMismatchError(f'prediction dims {pred.shape} and truth dims {truth.shape} differ')
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    return Confusion(tp, fp, fn, pred.size - tp - fp - fn)


def _iou(hits: int, misses: int) -> float:
    # a class absent from both masks is a perfect score
    return hits / (hits + misses) if hits + misses else 1.0


def iou_report(c: Confusion) -> IouReport:
    """Defect IOU, background IOU and their arithmetic mean"""
    defect = _iou(c.tp, c.fp + c.fn)
    background = _iou(c.tn, c.fp + c.fn)
    return IouReport(defect, background, (defect + background) / 2)


def format_report(pred: Volume | NDArray, truth: Volume | NDArray, with_reference: bool = False) -> str:
    """Fixed-format evaluation report: per-class IOU, mean IOU, porosities and counts"""
    c = confusion_counts(pred, truth)
    report = iou_report(c)
    lines: List[str] = [
        f'iou_defect      {report.iou_defect:.6f}',
        f'iou_background  {report.iou_background:.6f}',
        f'mean_iou        {report.mean_iou:.6f}',
        f'porosity_pred   {porosity(pred):.6f}',
        f'porosity_truth  {porosity(truth):.6f}',
        f'tp {c.tp}  fp {c.fp}  fn {c.fn}  tn {c.tn}',
    ]
    if with_reference:
        lines.append('reference mean IOU (full-scale CoCr validation specimen):')
        lines.extend(f'  {variant:<20s}{iou:.3f}' for variant, iou in REFERENCE_MEAN_IOU.items())
    return '\n'.join(lines)
