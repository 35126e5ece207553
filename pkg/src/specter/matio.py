"""Matrix CSV reading and writing.

Format: comma-separated decimal floats, no header, one matrix row per
line. Blank lines are ignored. Output uses ``%.17g`` so values survive a
round trip bit for bit.
"""

from __future__ import annotations

import csv
import io
import os
from typing import TextIO, Union

import numpy as np

from .errors import ParseError

PathOrFile = Union[str, os.PathLike, TextIO]


def parse_matrix_csv(text: str, source: str = "<string>") -> np.ndarray:
    rows = []
    width = None
    for lineno, fields in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not fields or all(f.strip() == "" for f in fields):
            continue
        row = []
        for col, field in enumerate(fields, start=1):
            token = field.strip()
            try:
                value = float(token)
            except ValueError:
                raise ParseError(
                    f"{source}: cannot parse {token!r} as a number",
                    line=lineno,
                    column=col,
                ) from None
            if not np.isfinite(value):
                raise ParseError(
                    f"{source}: non-finite value {token!r}",
                    line=lineno,
                    column=col,
                )
            row.append(value)
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(
                f"{source}: expected {width} columns, found {len(row)}",
                line=lineno,
                column=min(len(row), width) + 1,
            )
        rows.append(row)
    if not rows:
        raise ParseError(f"{source}: no data rows")
    return np.asarray(rows, dtype=float)


def read_matrix(src: PathOrFile) -> np.ndarray:
    """Read a matrix from a CSV path or open text file."""
    if hasattr(src, "read"):
        return parse_matrix_csv(src.read(), getattr(src, "name", "<stream>"))
    try:
        with open(src, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"{src}: {exc.strerror or exc}") from None
    return parse_matrix_csv(text, str(src))


def format_matrix_csv(M) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines = [",".join("%.17g" % x for x in row) for row in M]
    return "\n".join(lines) + "\n"


def write_matrix(dst: PathOrFile, M) -> None:
    text = format_matrix_csv(M)
    if hasattr(dst, "write"):
        dst.write(text)
        return
    with open(dst, "w", newline="") as fh:
        fh.write(text)
