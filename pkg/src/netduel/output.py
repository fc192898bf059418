"""Bit-stable result serialization: atomic file writes, CSV, manifests.

All files are UTF-8 with LF line endings and are first written to a
temporary name in the target directory, then renamed into place, so a
partially written file is never observable under its final name.
"""

from __future__ import annotations

import os
import tempfile
from collections.abc import Iterable, Mapping, Sequence

import numpy as np


def format_value(v) -> str:
    """Canonical text form: repr for floats (shortest round-trip), str otherwise.

    Numpy scalars are normalized to their Python equivalents first so the
    text form never depends on which numeric type produced the value.
    """
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def atomic_write_text(path: str, text: str) -> None:
    """Write text to path via a temporary file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def csv_text(
    columns: Sequence[str],
    rows: Iterable[Sequence],
    comments: Sequence[str] = (),
) -> str:
    """Render a CSV document: `#` comment header, column line, data rows."""
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row width {len(row)} != {len(columns)} columns")
        lines.append(",".join(format_value(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(
    path: str,
    columns: Sequence[str],
    rows: Iterable[Sequence],
    comments: Sequence[str] = (),
) -> None:
    atomic_write_text(path, csv_text(columns, rows, comments))


def manifest_text(entries: Mapping[str, object]) -> str:
    """Flat `key = value` document, one entry per line, in given order."""
    return "".join(f"{k} = {format_value(v)}\n" for k, v in entries.items())


def write_manifest(path: str, entries: Mapping[str, object]) -> None:
    atomic_write_text(path, manifest_text(entries))
