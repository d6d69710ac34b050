"""
Typed view of the settings. Each TOML section maps to one dataclass; `RunConfig()` equals
what the shipped `resources/config.toml` loads to.
"""
from dataclasses import dataclass, field, fields, is_dataclass, asdict, MISSING
from typing import Any, Dict, Mapping, Tuple, get_args
from .exceptions import ConfigError
from .optim import AdamState, LrSchedule
from .preprocess import BernsenParams, NlmParams, PreprocessParams
from .synth import SynthSpec
from .unet import UNetConfig
from ._types import BlendMode, Normalization, Triple


@dataclass(frozen=True)
class OptimConfig:
    initial_lr: float = 2e-4
    milestones: Tuple[int, ...] = (600, 1000, 1400)
    gamma: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    total_iters: int = 2000
    batch_size: int = 1
    patch: Triple = (32, 32, 32)

    def __post_init__(self) -> None:
        if self.total_iters < 0:
            raise ConfigError(f'total_iters must be non-negative, got {self.total_iters}')
        if self.batch_size < 1:
            raise ConfigError(f'batch_size must be positive, got {self.batch_size}')
        if self.weight_decay < 0:
            raise ConfigError(f'weight_decay must be non-negative, got {self.weight_decay}')

    def schedule(self) -> LrSchedule:
        return LrSchedule(self.initial_lr, self.milestones, self.gamma)

    def adam(self) -> AdamState:
        return AdamState(beta1=self.beta1, beta2=self.beta2, eps=self.eps)


@dataclass(frozen=True)
class DataConfig:
    train_images: Tuple[str, ...] = ()
    train_masks: Tuple[str, ...] = ()
    val_image: str = ''
    val_mask: str = ''
    fg_bias: float = 0.5
    flip: bool = True
    rotate: bool = True
    normalization: Normalization = 'zscore'
    window_lo: float = 0.0
    window_hi: float = 0.0

    def __post_init__(self) -> None:
        if len(self.train_images) != len(self.train_masks):
            raise ConfigError(f'{len(self.train_images)} training images but {len(self.train_masks)} masks')
        if bool(self.val_image) != bool(self.val_mask):
            raise ConfigError('val_image and val_mask are set together')
        if not 0 <= self.fg_bias <= 1:
            raise ConfigError(f'fg_bias must lie in [0, 1], got {self.fg_bias}')
        if self.normalization not in get_args(Normalization):
            raise ConfigError(f'unknown normalization {self.normalization!r}')

    @property
    def window(self) -> Tuple[float, ...]:
        return (self.window_lo, self.window_hi) if self.window_hi > self.window_lo else ()


@dataclass(frozen=True)
class PreprocessConfig:
    window_lo: float = 0.5
    window_hi: float = 99.5
    window_percentile: bool = True


@dataclass(frozen=True)
class MedianConfig:
    radius: int = 1

    def __post_init__(self) -> None:
        if self.radius < 1:
            raise ConfigError(f'median radius must be >= 1, got {self.radius}')


@dataclass(frozen=True)
class InferenceConfig:
    patch: Triple = (32, 32, 32)
    stride: Triple = (32, 32, 32)
    threshold: float = 0.5
    blend: BlendMode = 'uniform'

    def __post_init__(self) -> None:
        if not 0 < self.threshold < 1:
            raise ConfigError(f'threshold must lie in (0, 1), got {self.threshold}')
        if self.blend not in get_args(BlendMode):
            raise ConfigError(f'unknown blend mode {self.blend!r}')


@dataclass(frozen=True)
class TrainerConfig:
    eval_every: int = 100
    log_every: int = 10
    checkpoint_every: int = 0
    out_dir: str = 'runs'

    def __post_init__(self) -> None:
        if min(self.eval_every, self.log_every, self.checkpoint_every) < 0:
            raise ConfigError('trainer cadences must be non-negative (0 disables)')


_SECTIONS: Dict[str, type] = {
    'model': UNetConfig,
    'optim': OptimConfig,
    'data': DataConfig,
    'preprocess': PreprocessConfig,
    'median': MedianConfig,
    'nlm': NlmParams,
    'bernsen': BernsenParams,
    'inference': InferenceConfig,
    'trainer': TrainerConfig,
    'synth': SynthSpec,
}


def _coerce(value: Any, default: Any, key: str) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f'{key} must be true or false, got {value!r}')
        return value
    if isinstance(default, tuple):
        if isinstance(value, (str, bytes)) or not hasattr(value, '__iter__'):
            raise ConfigError(f'{key} must be a list, got {value!r}')
        return tuple(value)
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if type(default) is not type(value):
        raise ConfigError(f'{key} must be {type(default).__name__}, got {value!r}')
    return value


def _section(cls: type, values: Mapping[str, Any], prefix: str) -> Any:
    if not isinstance(values, Mapping):
        raise ConfigError(f'{prefix} must be a table, got {values!r}')
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f'unknown config keys: {", ".join(f"{prefix}.{k}" for k in unknown)}')
    kwargs = {}
    for name, value in values.items():
        f = known[name]
        default = f.default if f.default is not MISSING else f.default_factory()  # type: ignore[misc]
        kwargs[name] = _coerce(value, default, f'{prefix}.{name}')
    try:
        section = cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f'invalid [{prefix}] section: {e}')
    if hasattr(section, 'validate'):
        section.validate()
    return section


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    model: UNetConfig = field(default_factory=UNetConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    data: DataConfig = field(default_factory=DataConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    median: MedianConfig = field(default_factory=MedianConfig)
    nlm: NlmParams = field(default_factory=NlmParams)
    bernsen: BernsenParams = field(default_factory=BernsenParams)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "RunConfig":
        """Builds from nested `{section: {key: value}}`; unknown keys are rejected by full dotted name"""
        unknown = sorted(set(values) - set(_SECTIONS) - {'seed'})
        if unknown:
            raise ConfigError(f'unknown config keys: {", ".join(unknown)}')
        kwargs: Dict[str, Any] = {name: _section(section_cls, values[name], name)
                                  for name, section_cls in _SECTIONS.items() if name in values}
        if 'seed' in values:
            kwargs['seed'] = _coerce(values['seed'], 0, 'seed')
        return cls(**kwargs)

    @classmethod
    def from_settings(cls) -> "RunConfig":
        from .settings import Settings
        return cls.from_mapping(Settings().as_dict())

    def preprocess_params(self) -> PreprocessParams:
        return PreprocessParams(
            window=(self.preprocess.window_lo, self.preprocess.window_hi),
            window_percentile=self.preprocess.window_percentile,
            median_radius=self.median.radius,
            nlm=self.nlm,
            bernsen=self.bernsen
        )

    def as_flat_dict(self) -> Dict[str, Any]:
        flat: Dict[str, Any] = {'seed': self.seed}
        for name in _SECTIONS:
            section = getattr(self, name)
            values = asdict(section) if is_dataclass(section) else {}
            for key, value in values.items():
                flat[f'{name}.{key}'] = list(value) if isinstance(value, tuple) else value
        return flat
