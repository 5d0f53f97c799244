"""Small file helpers shared by the library and the CLI."""
import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import InputError


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temp file + rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=False) + "\n")


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    atomic_write(path, buf.getvalue())


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_column(path, what="values"):
    """Read a single-column CSV (optional non-numeric header) into a float array."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{what} file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise InputError(f"{path}: no {what}")
    out = np.empty(len(rows))
    for i, row in enumerate(rows, start=1):
        if len(row) != 1:
            raise InputError(f"{path}: row {i} has {len(row)} cells, expected a single column")
        try:
            out[i - 1] = float(row[0])
        except ValueError:
            raise InputError(f"{path}: non-numeric {what} {row[0]!r} at row {i}") from None
    if not np.all(np.isfinite(out)):
        raise InputError(f"{path}: non-finite {what}")
    return out
