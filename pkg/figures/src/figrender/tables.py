"""Reading the published experiment-output CSVs.

The CSV contract: UTF-8, LF, comma-separated, `.` decimal, any number of
`#`-prefixed comment lines before a header row, then data rows.  Columns
are addressed strictly by name so extra columns and column order never
matter to the renderer.
"""

import csv
from pathlib import Path

import numpy as np


class InputError(ValueError):
    """Input file missing, malformed, or not matching the figure kind."""


class Table:
    """One parsed CSV: comment lines plus named columns of strings."""

    def __init__(self, path: str, comments: list[str], columns: dict):
        self.path = path
        self.comments = comments
        self.columns = columns
        first = next(iter(columns.values()), [])
        self.n_rows = len(first)

    def require(self, names) -> None:
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise InputError(
                f"{self.path}: missing column(s): {', '.join(missing)}"
            )

    def text(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise InputError(f"{self.path}: missing column(s): {name}")
        return np.asarray(self.columns[name], dtype=object)

    def col(self, name: str) -> np.ndarray:
        raw = self.text(name)
        try:
            return raw.astype(float)
        except ValueError as exc:
            raise InputError(
                f"{self.path}: column {name} is not numeric: {exc}"
            ) from None


def read_table(path) -> Table:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    comments = []
    payload = []
    for line in text.splitlines():
        if line.startswith("#"):
            comments.append(line[1:].strip())
        elif line.strip():
            payload.append(line)
    if not payload:
        raise InputError(f"{path}: no header row")
    rows = list(csv.reader(payload))
    header = rows[0]
    if len(set(header)) != len(header):
        raise InputError(f"{path}: duplicate column names in header")
    data = rows[1:]
    if not data:
        raise InputError(f"{path}: no data rows")
    for i, row in enumerate(data):
        if len(row) != len(header):
            raise InputError(
                f"{path}: row {i + 1} has {len(row)} fields, header has "
                f"{len(header)}"
            )
    columns = {name: [row[j] for row in data] for j, name in enumerate(header)}
    return Table(str(path), comments, columns)
