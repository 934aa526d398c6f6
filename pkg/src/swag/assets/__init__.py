"""Bundled 128x128 test images: ten content scenes and ten style textures.

Paths are resolved inside the installed package, so recipes that name a
bundled image (``bundled:content/03`` on the command line) are reproducible
on any machine.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

KINDS = ("content", "style")
PREFIX = "bundled:"


def directory(kind: str) -> Path:
    if kind not in KINDS:
        raise KeyError(f"unknown asset kind {kind!r}; expected one of {KINDS}")
    return Path(str(resources.files(__name__).joinpath(kind)))


def paths(kind: str) -> list[Path]:
    return sorted(directory(kind).glob("*.ppm"))


def path(kind: str, key: str | int) -> Path:
    """Look up an asset by index (``3``), number prefix (``"03"``) or stem."""
    items = paths(kind)
    if isinstance(key, int):
        return items[key]
    for p in items:
        if p.stem == key or p.stem.split("_", 1)[0] == key or p.stem.split("_", 1)[-1] == key:
            return p
    raise KeyError(f"no bundled {kind} image matches {key!r}")


def resolve(spec: str) -> Path:
    """Turn ``bundled:KIND/KEY`` into a file path; other strings pass through."""
    if not spec.startswith(PREFIX):
        return Path(spec)
    kind, _, key = spec[len(PREFIX):].partition("/")
    return path(kind, key)
