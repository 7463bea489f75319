"""Deterministic CSV/JSON writers and the run manifest."""

import csv
import datetime
import hashlib
import json
import platform
from pathlib import Path

import numpy as np

from .data import format_float


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if isinstance(value, (np.integer,)):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if hasattr(obj, "value") and hasattr(obj, "name"):  # enums
        return obj.value
    return obj


class Bundle:
    """An output directory that records every file written into it."""

    def __init__(self, out_dir, command, config):
        self.root = Path(out_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.config = config
        self.files = []

    def path(self, name):
        self.files.append(name)
        return self.root / name

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])

    def json(self, name, obj):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(_plain(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def finish(self, runtime=None):
        from . import __version__
        import numba

        files = []
        for name in sorted(set(self.files)):
            digest = hashlib.sha256((self.root / name).read_bytes()).hexdigest()
            files.append({"name": name, "sha256": digest})
        manifest = {
            "command": self.command,
            "config": self.config,
            "versions": {
                "featstab": __version__,
                "numpy": np.__version__,
                "numba": numba.__version__,
                "python": platform.python_version(),
            },
            "files": files,
            "runtime": {
                "created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
                **(runtime or {}),
            },
        }
        with open(self.root / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(_plain(manifest), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return manifest
