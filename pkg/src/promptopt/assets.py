"""Access to bundled text assets: templates, strategy library, toy data.

Assets live in the installed package so offline runs and the demo config need
nothing outside the wheel. Config values may reference them with a
``builtin:`` prefix (e.g. ``builtin:toy_arithmetic.jsonl``).
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

BUILTIN_PREFIX = "builtin:"


def asset_path(name: str) -> Path:
    """Filesystem path of a bundled asset."""
    path = Path(str(resources.files(__package__) / "assets" / name))
    if not path.exists():
        raise FileNotFoundError(f"no bundled asset named {name!r}")
    return path


def load_asset_text(name: str) -> str:
    return asset_path(name).read_text(encoding="utf-8")


def resolve_path(value: str) -> Path:
    """Resolve a config path value, honoring the ``builtin:`` prefix."""
    if value.startswith(BUILTIN_PREFIX):
        return asset_path(value[len(BUILTIN_PREFIX) :])
    return Path(value)
