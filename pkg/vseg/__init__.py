import pathlib

def _get_version() -> str:
    from importlib.metadata import version, PackageNotFoundError

    try:
        return version("vseg-xct")
    except PackageNotFoundError:
        version_file = pathlib.Path(__file__).parent.parent / "VERSION"
        return version_file.read_text(encoding="utf8").strip() if version_file.exists() else "0.0.0"


__all__ = ["__version__", "ROOT_DIR"]
__version__ = _get_version()
ROOT_DIR = pathlib.Path(__file__).parent.resolve()
