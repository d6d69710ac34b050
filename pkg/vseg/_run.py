import sys
from argparse import ArgumentParser, Namespace
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, Sequence, get_args
import numpy as np
from . import __version__
from .checkpoint import load_checkpoint
from .color_logger import get_logger, change_default_log_level
from .data import normalize
from .exceptions import VsegError, ConfigError, DataError, ShapeError, UsageError
from .inference import binarize, plan_tiles, predict_volume
from .metrics import format_report
from .preprocess import preprocess_volume
from .run_config import RunConfig
from .settings import init_settings, parse_overrides
from .synth import SPECIMEN_TABLE, generate_specimens, synth_generate
from .trainer import compare_variants, render_table, train_loop
from .utils import path_to_resource
from .volume import LabeledVolume, Volume, export_slices, list_slices, load_volume, save_volume, stack_slices
from ._types import VariantKind

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _validate_log_level(level: str) -> bool:
    return level.upper() in ['DEBUG', 'INFO', 'WARN', 'WARNING', 'ERROR', 'CRITICAL']


def _load_config(args: Namespace) -> RunConfig:
    config_files = [path_to_resource('config.toml')]
    if args.config:
        if not Path(args.config).is_file():
            raise ConfigError(f'config file not found: {args.config}')
        config_files.append(str(args.config))
    init_settings(config_files, parse_overrides(args.overrides))
    return RunConfig.from_settings()


def _save_labeled(lv: LabeledVolume, prefix: Path) -> None:
    save_volume(lv.image, f'{prefix}_image')
    save_volume(lv.mask, f'{prefix}_mask')


def _read_input(path: str, spacing: float) -> Volume:
    """A volume file, or a directory of PGM slices stacked in filename order"""
    if Path(path).is_dir():
        return stack_slices(list_slices(path), spacing=spacing)
    return load_volume(path)


def _synth(args: Namespace, cfg: RunConfig) -> None:
    spec = cfg.synth if args.seed is None else replace(cfg.synth, seed=args.seed)
    out = Path(args.out)
    if args.specimens:
        for specimen, lv in generate_specimens(spec, SPECIMEN_TABLE):
            _save_labeled(lv, out / specimen.name)
            get_logger().info(f'{specimen.name} ({specimen.role}): porosity target {specimen.porosity}')
    else:
        _save_labeled(synth_generate(spec), out / 'synth')
    get_logger().info(f'Synthetic volumes written to {out}', color='green')


def _preprocess(args: Namespace, cfg: RunConfig) -> None:
    volume = _read_input(args.input, args.spacing)
    lv = preprocess_volume(volume, cfg.preprocess_params())
    _save_labeled(lv, Path(args.out))
    get_logger().info(f'Filtered image and label mask written with prefix {args.out}', color='green')


def _train(args: Namespace, cfg: RunConfig) -> None:
    result = train_loop(cfg, out_dir=args.out, resume=args.resume)
    print(f'mean_iou {result.final.mean_iou:.6f}  defect_iou {result.final.iou_defect:.6f}')


def _predict(args: Namespace, cfg: RunConfig) -> None:
    model = load_checkpoint(args.checkpoint, expected=cfg.model).model
    volume = load_volume(args.input)
    image = normalize(volume, cfg.data.normalization, cfg.data.window)
    plan = plan_tiles(volume.dims, cfg.inference.patch, cfg.inference.stride, divisor=model.config.divisor)
    prob = predict_volume(model, image, plan, blend=cfg.inference.blend, progress=True)
    mask = binarize(prob, cfg.inference.threshold, spacing=volume.spacing)
    save_volume(prob.to_volume(volume.spacing), f'{args.out}_prob')
    save_volume(mask, f'{args.out}_mask')
    if args.export_slices:
        export_slices(prob.to_volume(volume.spacing), args.export_slices, prefix='prob')
        export_slices(Volume(mask.data * np.uint8(255), spacing=mask.spacing), args.export_slices, prefix='mask')
    get_logger().info(f'Prediction of {len(plan)} tiles written with prefix {args.out}', color='green')


def _eval(args: Namespace, cfg: RunConfig) -> None:
    print(format_report(load_volume(args.pred), load_volume(args.truth), with_reference=args.with_reference))


def _compare(args: Namespace, cfg: RunConfig) -> None:
    rows = compare_variants(cfg, args.variants, out_dir=args.out)
    print(render_table(rows, with_reference=args.with_reference))


_COMMANDS: Dict[str, Callable[[Namespace, RunConfig], None]] = {
    'synth': _synth,
    'preprocess': _preprocess,
    'train': _train,
    'predict': _predict,
    'eval': _eval,
    'compare': _compare,
}


def build_parser() -> ArgumentParser:
    parser = _Parser(prog='vseg', description="vseg: 3D U-Net defect segmentation of XCT volumes")
    parser.add_argument('-l', '--log-level', default='INFO', dest='log', help='Set logging level', type=str)
    parser.add_argument('--version', help='Show version', dest='show_version', default=False, action='store_true')
    parser.add_argument('--config-path', help='Show path to the default config file', dest='config_path', default=False, action='store_true')
    commands = parser.add_subparsers(dest='command', parser_class=_Parser)

    def command(name: str, help: str) -> ArgumentParser:
        sub = commands.add_parser(name, help=help)
        sub.add_argument('--config', default=None, help='TOML file with settings on top of the defaults')
        sub.add_argument('overrides', nargs='*', metavar='section.key=value', help='Single-setting overrides')
        return sub

    synth = command('synth', 'Generate synthetic porous volumes with their masks')
    synth.add_argument('--out', required=True, help='Output directory')
    synth.add_argument('--seed', type=int, default=None, help='Overrides synth.seed')
    synth.add_argument('--specimens', action='store_true', help='Generate the four-specimen reference set')

    preprocess = command('preprocess', 'Filter a scan and generate its label mask')
    preprocess.add_argument('--input', required=True, help='Volume file or directory of PGM slices')
    preprocess.add_argument('--out', required=True, help='Output prefix (<out>_image, <out>_mask)')
    preprocess.add_argument('--spacing', type=float, default=1.0, help='Slice spacing when stacking slices')

    train = command('train', 'Train a U-Net on labelled volumes')
    train.add_argument('--out', default=None, help='Output directory (defaults to trainer.out_dir)')
    train.add_argument('--resume', default=None, help='Checkpoint to continue from')

    predict = command('predict', 'Predict defect probabilities and masks for a volume')
    predict.add_argument('--checkpoint', required=True)
    predict.add_argument('--input', required=True)
    predict.add_argument('--out', required=True, help='Output prefix (<out>_prob, <out>_mask)')
    predict.add_argument('--export-slices', default=None, dest='export_slices', help='Directory for 8-bit PGM slices')

    evaluate = command('eval', 'Score a predicted mask against the truth')
    evaluate.add_argument('--pred', required=True)
    evaluate.add_argument('--truth', required=True)
    evaluate.add_argument('--compare-paper', '--with-reference', action='store_true', dest='with_reference', help='Print the reference IOUs')

    compare = command('compare', 'Train several variants on the same data and tabulate them')
    compare.add_argument('--variants', nargs='+', default=list(get_args(VariantKind)), choices=get_args(VariantKind))
    compare.add_argument('--out', default=None)
    compare.add_argument('--compare-paper', '--with-reference', action='store_true', dest='with_reference', help='Add the reference columns')
    return parser


def run_cli(argv: Sequence[str]) -> int:
    logger = get_logger()
    try:
        args = build_parser().parse_args(list(argv))
        if not _validate_log_level(args.log):
            raise UsageError(f'Invalid log level {args.log}')
        change_default_log_level(args.log.upper())
        if args.show_version:
            print(f"vseg version: {__version__}")
        elif args.config_path:
            print(f"Config file path: {path_to_resource('config.toml')}")
        elif args.command is None:
            raise UsageError('a command is required: ' + ', '.join(_COMMANDS))
        else:
            logger.info(f"Running version: {__version__}")
            _COMMANDS[args.command](args, _load_config(args))
        return EXIT_OK
    except SystemExit as e:
        return int(e.code or 0)
    except DataError as e:
        logger.error(str(e), color='red')
        logger.debug('Failed run', exc_info=True)
        return EXIT_DATA
    except (UsageError, ConfigError, ShapeError) as e:
        print(str(e), file=sys.stderr)
        logger.debug('Usage error', exc_info=True)
        return EXIT_USAGE
    except VsegError as e:
        logger.error(str(e), color='red')
        logger.debug('Failed run', exc_info=True)
        return EXIT_DATA


def main():
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == '__main__':
    main()
