"""Deterministic CSV writing. Files are written to a temporary sibling and
renamed into place, so a failed write never leaves a partial file."""

from __future__ import annotations

import csv
import os
import tempfile
from pathlib import Path

import numpy as np


def fmt9(x) -> str:
    """Fixed 9-significant-digit formatting used by run outputs."""
    return format(float(x), ".9g")


def _cell(v, fmt) -> str:
    if isinstance(v, (str, bool)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return fmt(float(v))


def write_csv_atomic(path, header, rows, fmt=fmt9) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v, fmt) for v in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv_columns(path, columns) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        missing = [c for c in columns if c not in header]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        idx = [header.index(c) for c in columns]
        data = [[float(row[i]) for i in idx] for row in reader]
    arr = np.array(data, dtype=float).reshape(-1, len(columns))
    return {c: arr[:, i] for i, c in enumerate(columns)}
