"""Atomic file writing helpers.

All run artifacts are written atomically (temp file + rename in the target
directory) so a crashed run never leaves truncated JSON or CSV behind.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path


def atomic_write_text(path: str | Path, text: str, encoding: str = "utf-8") -> Path:
    """Write ``text`` to ``path`` atomically, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding=encoding, newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise
    return path


def atomic_write_json(path: str | Path, obj) -> Path:
    """Serialize ``obj`` with sorted keys (byte-stable) and write atomically."""
    return atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")
