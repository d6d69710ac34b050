import copy
from dynaconf import Dynaconf
from dynaconf.utils.parse_conf import parse_conf_data
from typing import Any, Dict, List, Sequence
from .color_logger import get_logger
from .exceptions import ConfigError, UsageError


_CONFIG_FILES_PATHS: List[str] = []
_OVERRIDES: Dict[str, Any] = {}


def parse_overrides(items: Sequence[str]) -> Dict[str, Any]:
    """`section.key=value` pairs; values are read as TOML, bare words stay strings"""
    overrides: Dict[str, Any] = {}
    for item in items:
        key, sep, value = item.partition('=')
        key = key.strip()
        if not sep or not key or any(not part for part in key.split('.')):
            raise UsageError(f'overrides look like section.key=value, got {item!r}')
        overrides[key] = parse_conf_data(value.strip(), tomlfy=True, box_settings={})
    return overrides


def init_settings(config_files: List[str], overrides: Dict[str, Any] | None = None) -> None:
    global _CONFIG_FILES_PATHS, _OVERRIDES
    _CONFIG_FILES_PATHS = list(config_files)
    _OVERRIDES = dict(overrides or {})
    Settings._instance = None
    Settings._settings = None


class Settings:
    """
    A Singleton class for settings.
    Later files replace whole top-level tables of earlier ones; keys a table leaves out fall
    back to the `RunConfig` defaults, which mirror the shipped config.
    """
    _instance = None
    _settings = None

    def __new__(cls, *args, **kwargs):
        if cls._instance is None:
            if not _CONFIG_FILES_PATHS:
                raise ConfigError('No config files supplied to an uninitialized instance!')
            get_logger().info(f'Loading config files: {str(_CONFIG_FILES_PATHS)}')
            cls._settings = Dynaconf(
                settings_files=_CONFIG_FILES_PATHS,
                environments=False,
                merge_enabled=False
            )
            cls._instance = super(Settings, cls).__new__(cls)
        return cls._instance

    def as_dict(self) -> Dict[str, Any]:
        """Loaded values with lower-cased top-level keys and the dotted overrides applied"""
        values = {key.lower(): copy.deepcopy(value) for key, value in self._settings.as_dict().items()
                  if not key.lower().startswith('dynaconf')}
        for dotted, value in _OVERRIDES.items():
            *parents, leaf = dotted.split('.')
            node = values
            for part in parents:
                child = node.setdefault(part, {})
                if not isinstance(child, dict):
                    raise ConfigError(f'cannot override {dotted}: {part} is not a table')
                node = child
            get_logger().debug(f'Override {dotted} = {value!r}')
            node[leaf] = value
        return values

    def __getattr__(self, name):
        try:
            return getattr(self._settings, name)
        except AttributeError:
            raise AttributeError(f"'{type(self).__name__}' object has no attribute '{name}'")
