"""
Patch-based training: each iteration samples a (foreground biased) patch per batch item,
augments it, runs forward/backward and one Adam step at the scheduled rate. The validation
volume is predicted tile by tile every `trainer.eval_every` iterations and once at the end.
"""
import csv
import math
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Sequence, Tuple
import numpy as np
from tqdm import tqdm
from .checkpoint import load_checkpoint, save_checkpoint
from .color_logger import get_logger
from .data import augment, normalize, sample_patch
from .exceptions import ConfigError, NonFiniteError, ShapeError
from .inference import binarize, plan_tiles, predict_volume
from .metrics import IouReport, REFERENCE_MEAN_IOU, REFERENCE_GPU_HOURS, confusion_counts, iou_report
from .nn import functional as F
from .optim import adam_step, lr_at
from .run_config import RunConfig
from .unet import UNetModel, VARIANT_TITLES
from .volume import LabeledVolume, load_volume
from ._types import VariantKind

LOG_FIELDS = ('iter', 'lr', 'loss', 'val_mean_iou', 'val_defect_iou')
FINAL_CHECKPOINT = 'final.vseg'
BEST_CHECKPOINT = 'best.vseg'
LOG_FILE = 'train_log.csv'


@dataclass(frozen=True)
class TrainRecord:
    iteration: int
    lr: float
    loss: float
    val_mean_iou: float | None = None
    val_defect_iou: float | None = None
    elapsed: float = field(default=0.0, compare=False)

    def row(self) -> List[str]:
        def fmt(value: float | None) -> str:
            return '' if value is None else repr(float(value))
        return [str(self.iteration), fmt(self.lr), fmt(self.loss), fmt(self.val_mean_iou), fmt(self.val_defect_iou)]


class TrainLog:
    """Append-only record of the run; mirrored to a CSV file when `path` is given"""
    def __init__(self, path: str | os.PathLike | None = None, append: bool = False) -> None:
        self.records: List[TrainRecord] = []
        self.path = Path(path) if path else None
        if self.path and not (append and self.path.exists()):
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open('w', newline='', encoding='utf8') as f:
                csv.writer(f).writerow(LOG_FIELDS)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: TrainRecord) -> None:
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError(f'iteration {record.iteration} does not follow {self.records[-1].iteration}')
        if not math.isfinite(record.loss):
            raise NonFiniteError(f'non-finite loss at iteration {record.iteration}', iteration=record.iteration)
        self.records.append(record)
        if self.path:
            with self.path.open('a', newline='', encoding='utf8') as f:
                csv.writer(f).writerow(record.row())

    @property
    def losses(self) -> List[float]:
        return [r.loss for r in self.records]


@dataclass
class TrainResult:
    model: UNetModel
    log: TrainLog
    final: IouReport
    best_mean_iou: float
    seconds: float
    final_checkpoint: Path
    best_checkpoint: Path


def _load_labeled(image_path: str, mask_path: str) -> LabeledVolume:
    return LabeledVolume(load_volume(image_path), load_volume(mask_path))


def load_training_data(cfg: RunConfig) -> Tuple[List[LabeledVolume], LabeledVolume]:
    """Training volumes from `data.train_*`; validation from `data.val_*`, else the first training volume"""
    if not cfg.data.train_images:
        raise ConfigError('no training volumes configured (data.train_images / data.train_masks)')
    train = [_load_labeled(image, mask) for image, mask in zip(cfg.data.train_images, cfg.data.train_masks)]
    val = _load_labeled(cfg.data.val_image, cfg.data.val_mask) if cfg.data.val_image else train[0]
    return train, val


def _normalized(lv: LabeledVolume, cfg: RunConfig) -> LabeledVolume:
    return LabeledVolume(normalize(lv.image, cfg.data.normalization, cfg.data.window), lv.mask)


def evaluate(model: UNetModel, val: LabeledVolume, cfg: RunConfig, progress: bool = False) -> IouReport:
    """Tiled prediction of an already normalized volume, binarized and scored against its mask"""
    plan = plan_tiles(val.dims, cfg.inference.patch, cfg.inference.stride, divisor=model.config.divisor)
    prob = predict_volume(model, val.image, plan, blend=cfg.inference.blend, progress=progress)
    return iou_report(confusion_counts(binarize(prob, cfg.inference.threshold), val.mask))


def _check_patch(cfg: RunConfig, volumes: Sequence[LabeledVolume]) -> None:
    patch = cfg.optim.patch
    divisor = cfg.model.divisor
    if any(p % divisor for p in patch):
        raise ShapeError(f'training patch {tuple(patch)} must be divisible by {divisor} for {cfg.model.levels} levels')
    for lv in volumes:
        if any(p > d for p, d in zip(patch, lv.dims)):
            raise ShapeError(f'training patch {tuple(patch)} does not fit volume {lv.dims}')


def _batch(volumes: List[LabeledVolume], cfg: RunConfig, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    images, masks = [], []
    for _ in range(cfg.optim.batch_size):
        lv = volumes[int(rng.integers(0, len(volumes)))]
        patch = sample_patch(lv, cfg.optim.patch, rng, cfg.data.fg_bias)
        patch = augment(patch, rng, flip=cfg.data.flip, rotate=cfg.data.rotate)
        images.append(patch.image.data[None])
        masks.append(patch.mask.data)
    return np.stack(images), np.stack(masks)


def _previous_best(best_path: Path, val: LabeledVolume, cfg: RunConfig) -> float:
    """Validation mean IOU of an existing best checkpoint, -1 when there is none"""
    if not best_path.is_file():
        return -1.0
    report = evaluate(load_checkpoint(best_path, expected=cfg.model).model, val, cfg)
    get_logger().info(f'Existing best checkpoint scores {report.mean_iou:.4f}')
    return report.mean_iou


def train_loop(cfg: RunConfig, out_dir: str | os.PathLike | None = None,
               train_volumes: Sequence[LabeledVolume] | None = None, val_volume: LabeledVolume | None = None,
               resume: str | os.PathLike | None = None, progress: bool = True) -> TrainResult:
    """
    Trains `cfg.model` for `cfg.optim.total_iters` iterations and writes `final.vseg`,
    `best.vseg` (highest validation mean IOU) and `train_log.csv` under `out_dir`.
    Model initialization and the data stream are both derived from `cfg.seed`.
    """
    logger = get_logger()
    out_dir = Path(out_dir or cfg.trainer.out_dir)
    if train_volumes is None:
        train_volumes, loaded_val = load_training_data(cfg)
        val_volume = val_volume or loaded_val
    train_volumes = list(train_volumes)
    if not train_volumes:
        raise ConfigError('no training volumes')
    val_volume = val_volume or train_volumes[0]
    _check_patch(cfg, train_volumes)

    volumes = [_normalized(lv, cfg) for lv in train_volumes]
    val = _normalized(val_volume, cfg)
    model_seq, data_seq = np.random.SeedSequence(cfg.seed).spawn(2)

    if resume:
        checkpoint = load_checkpoint(resume, expected=cfg.model)
        model, start = checkpoint.model, checkpoint.iteration
        adam = checkpoint.adam or cfg.optim.adam()
        rng = np.random.default_rng([cfg.seed, start])
        logger.info(f'Resuming from {resume} at iteration {start}')
    else:
        model, start = UNetModel(cfg.model, seed=int(model_seq.generate_state(1)[0])), 0
        adam = cfg.optim.adam()
        rng = np.random.default_rng(data_seq)

    schedule = cfg.optim.schedule()
    total = cfg.optim.total_iters
    log = TrainLog(out_dir / LOG_FILE, append=bool(resume))
    final_path, best_path = out_dir / FINAL_CHECKPOINT, out_dir / BEST_CHECKPOINT
    best_mean_iou = _previous_best(best_path, val, cfg) if resume else -1.0
    last_report: IouReport | None = None
    began = time.perf_counter()
    logger.info(f'Training {VARIANT_TITLES[cfg.model.variant]} on {len(volumes)} volume(s), '
                f'iterations {start}..{total}, patch {tuple(cfg.optim.patch)}')

    for iteration in tqdm(range(start, total), total=total, initial=start, desc='train', disable=not progress):
        lr = lr_at(iteration, schedule)
        images, masks = _batch(volumes, cfg, rng)
        logits = model.forward(images, mode='train')
        loss, grad = F.softmax_cross_entropy(logits, masks)
        if not math.isfinite(loss):
            raise NonFiniteError(f'non-finite loss at iteration {iteration}', iteration=iteration)
        model.backward(grad)
        try:
            adam_step(model.params(), adam, lr, cfg.optim.weight_decay)
        except NonFiniteError as e:
            logger.error(f'Aborting at iteration {iteration}: {e}', color='red')
            raise NonFiniteError(f'iteration {iteration}: {e}', layer=e.layer, iteration=iteration)

        done = iteration + 1
        last_report = None
        if cfg.trainer.eval_every and done % cfg.trainer.eval_every == 0:
            last_report = evaluate(model, val, cfg)
            logger.info(f'iter {done}: validation mean IOU {last_report.mean_iou:.4f}, '
                        f'defect IOU {last_report.iou_defect:.4f}', color='green')
            if last_report.mean_iou > best_mean_iou:
                best_mean_iou = last_report.mean_iou
                save_checkpoint(best_path, model, adam, done)
                logger.info(f'Best checkpoint updated ({best_mean_iou:.4f})', color='cyan')
        log.append(TrainRecord(iteration, lr, loss,
                               last_report.mean_iou if last_report else None,
                               last_report.iou_defect if last_report else None,
                               elapsed=time.perf_counter() - began))
        if cfg.trainer.log_every and done % cfg.trainer.log_every == 0:
            logger.info(f'iter {iteration}: lr {lr:.3g}, loss {loss:.5f}')
        if cfg.trainer.checkpoint_every and done % cfg.trainer.checkpoint_every == 0:
            save_checkpoint(out_dir / f'iter_{done:06d}.vseg', model, adam, done)

    final = last_report or evaluate(model, val, cfg)
    seconds = time.perf_counter() - began
    save_checkpoint(final_path, model, adam, max(total, start))
    if final.mean_iou > best_mean_iou:
        best_mean_iou = final.mean_iou
        save_checkpoint(best_path, model, adam, max(total, start))
    logger.info(f'Finished in {seconds:.1f}s: mean IOU {final.mean_iou:.4f}, defect IOU {final.iou_defect:.4f}', color='green')
    return TrainResult(model, log, final, best_mean_iou, seconds, final_path, best_path)


@dataclass(frozen=True)
class VariantRow:
    variant: VariantKind
    seconds: float
    mean_iou: float
    defect_iou: float


def compare_variants(cfg: RunConfig, variants: Sequence[VariantKind], out_dir: str | os.PathLike | None = None,
                     train_volumes: Sequence[LabeledVolume] | None = None, val_volume: LabeledVolume | None = None,
                     progress: bool = True) -> List[VariantRow]:
    """Trains every variant on the same data and seed; one row per variant"""
    out_dir = Path(out_dir or cfg.trainer.out_dir)
    if train_volumes is None:
        train_volumes, loaded_val = load_training_data(cfg)
        val_volume = val_volume or loaded_val
    rows = []
    for variant in variants:
        variant_cfg = replace(cfg, model=replace(cfg.model, variant=variant))
        result = train_loop(variant_cfg, out_dir / variant, train_volumes, val_volume, progress=progress)
        rows.append(VariantRow(variant, result.seconds, result.final.mean_iou, result.final.iou_defect))
    return rows


def render_table(rows: Sequence[VariantRow], with_reference: bool = False) -> str:
    header = f'{"model":<32s}{"seconds":>10s}{"mean IOU":>10s}{"defect IOU":>12s}'
    if with_reference:
        header += f'{"ref IOU":>10s}{"ref GPU h":>11s}'
    lines = [header, '-' * len(header)]
    for row in rows:
        line = f'{VARIANT_TITLES[row.variant]:<32s}{row.seconds:>10.1f}{row.mean_iou:>10.4f}{row.defect_iou:>12.4f}'
        if with_reference:
            line += f'{REFERENCE_MEAN_IOU[row.variant]:>10.3f}{REFERENCE_GPU_HOURS[row.variant]:>11.2f}'
        lines.append(line)
    return '\n'.join(lines)
