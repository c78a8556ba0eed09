"""Registry of the built-in model files shipped in ``vbob/models``."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from .modelfile import Model, load_file, load_text


class UnknownModel(KeyError):
    def __str__(self) -> str:
        return f"unknown model {self.args[0]!r}; try one of: {', '.join(builtin_names())}"


def _files():
    return resources.files("vbob") / "models"


def builtin_names() -> list[str]:
    return sorted(p.name[:-4] for p in _files().iterdir() if p.name.endswith(".vbm"))


def builtin_text(name: str) -> str:
    if name not in builtin_names():
        raise UnknownModel(name)
    return (_files() / f"{name}.vbm").read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def load_builtin(name: str) -> Model:
    return load_text(builtin_text(name), f"{name}.vbm")


def load_model(ref: str) -> Model:
    """A built-in by name, or a model file by path (anything ending in ``.vbm``)."""
    if ref.endswith(".vbm"):
        return load_file(ref)
    return load_builtin(ref)
