import logging
from typing import Any, Dict
from ._types import Color

_DEFAULT_LOG_LEVEL: str | int = "INFO"
_DEFAULT_LOGGER_NAME = "vseg"
_LOGGERS: Dict[str, "ColorLogger"] = {}

_RESET = '\033[0m'
_COLORS: Dict[Color, str] = {
    'red': '\033[91m',
    'green': '\033[92m',
    'yellow': '\033[93m',
    'blue': '\033[94m',
    'magenta': '\033[95m',
    'cyan': '\033[96m'
}


class ColorLogger(logging.Logger):
    """
    A stream logger whose level methods accept an optional `color` keyword,
    e.g. `get_logger().info("best checkpoint updated", color='cyan')`
    """
    def __init__(self, name: str, level: int | str) -> None:
        super().__init__(name, level)
        self.propagate = False
        self._handler = logging.StreamHandler()
        self._handler.setLevel(level)
        self._handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s'))
        self.addHandler(self._handler)

    def set_level(self, level: int | str) -> None:
        self.setLevel(level)
        self._handler.setLevel(level)

    @staticmethod
    def _add_color(msg: object, color: Color | None) -> object:
        return f'{_COLORS[color]}{msg}{_RESET}' if color else msg

    def debug(self, msg: object, *args: object, color: Color | None = None, **kwargs: Any) -> None:
        kwargs.setdefault('stacklevel', 2)
        super().debug(self._add_color(msg, color), *args, **kwargs)

    def info(self, msg: object, *args: object, color: Color | None = None, **kwargs: Any) -> None:
        kwargs.setdefault('stacklevel', 2)
        super().info(self._add_color(msg, color), *args, **kwargs)

    def warning(self, msg: object, *args: object, color: Color | None = None, **kwargs: Any) -> None:
        kwargs.setdefault('stacklevel', 2)
        super().warning(self._add_color(msg, color), *args, **kwargs)

    warn = warning  # type: ignore[assignment]

    def error(self, msg: object, *args: object, color: Color | None = None, **kwargs: Any) -> None:
        kwargs.setdefault('stacklevel', 2)
        super().error(self._add_color(msg, color), *args, **kwargs)

    def critical(self, msg: object, *args: object, color: Color | None = None, **kwargs: Any) -> None:
        kwargs.setdefault('stacklevel', 2)
        super().critical(self._add_color(msg, color), *args, **kwargs)


def get_logger(name: str | None = None, level: str | int | None = None) -> ColorLogger:
    name = name or _DEFAULT_LOGGER_NAME
    logger = _LOGGERS.get(name)
    if logger is None:
        logger = ColorLogger(name, level=level or _DEFAULT_LOG_LEVEL)
        _LOGGERS[name] = logger
    elif level is not None:
        logger.set_level(level)
    return logger


def change_default_log_level(level: str | int) -> None:
    global _DEFAULT_LOG_LEVEL
    _DEFAULT_LOG_LEVEL = level
    for logger in _LOGGERS.values():
        logger.set_level(level)
