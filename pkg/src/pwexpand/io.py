"""Atomic file output and CSV writing with a provenance header."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence


def atomic_write(path, data, mode: str = "w") -> Path:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    return path


def fmt(x) -> str:
    """Shortest round-tripping decimal for floats."""
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    return repr(float(x))


def csv_text(columns: Sequence[str], rows: Iterable[Sequence], config: dict | None = None) -> str:
    lines = []
    if config is not None:
        lines.append("# " + json.dumps(config, sort_keys=True, default=str))
    lines.append(",".join(columns))
    for r in rows:
        lines.append(",".join(fmt(v) for v in r))
    return "\n".join(lines) + "\n"


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], config: dict | None = None) -> Path:
    return atomic_write(path, csv_text(columns, rows, config))


def write_json(path, obj) -> Path:
    return atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")


def read_csv(path):
    """``(config, columns, rows)`` from a file written by :func:`write_csv`."""
    config, columns, rows = None, None, []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                config = json.loads(line[2:])
            elif columns is None:
                columns = line.split(",")
            elif line:
                rows.append([float(v) for v in line.split(",")])
    return config, columns, rows
