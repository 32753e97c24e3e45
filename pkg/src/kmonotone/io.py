"""Reading count data.

Two formats are accepted:

* frequency mode, a CSV file whose header is ``value,count``;
* raw mode, one base-10 integer observation per line.

The format is detected from the first non-blank line.  Line endings may be
LF or CRLF.
"""

import csv
import io as _io

from .errors import KMonotoneError


class DataError(KMonotoneError, ValueError):
    """The input file is malformed; the message names the offending line."""


def parse_counts(text, min_value=0):
    """Map ``value -> count`` from the text of an input file.

    Parameters
    ----------
    text : str
    min_value : int
        Smallest admissible value (1 for abundance data).

    Raises
    ------
    DataError
    """
    lines = text.splitlines()
    first = next((i for i, ln in enumerate(lines) if ln.strip()), None)
    if first is None:
        raise DataError("input is empty")
    header = [c.strip().lower() for c in lines[first].lstrip("﻿").split(",")]
    counts = {}
    if header == ["value", "count"]:
        reader = csv.reader(_io.StringIO("\n".join(lines[first + 1:])))
        for offset, row in enumerate(reader):
            lineno = first + 2 + offset
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise DataError(f"line {lineno}: expected 'value,count', got {','.join(row)!r}")
            value = _integer(row[0], lineno, "value")
            count = _integer(row[1], lineno, "count")
            if count < 0:
                raise DataError(f"line {lineno}: count must be >= 0")
            _check_value(value, min_value, lineno)
            counts[value] = counts.get(value, 0) + count
    else:
        for lineno, ln in enumerate(lines, start=1):
            if not ln.strip():
                continue
            value = _integer(ln, lineno, "observation")
            _check_value(value, min_value, lineno)
            counts[value] = counts.get(value, 0) + 1
    counts = {v: c for v, c in counts.items() if c > 0}
    if not counts:
        raise DataError("input has no positive count")
    return dict(sorted(counts.items()))


def _integer(token, lineno, what):
    tok = token.strip()
    try:
        return int(tok, 10)
    except ValueError:
        raise DataError(f"line {lineno}: {what} {tok!r} is not an integer") from None


def _check_value(value, min_value, lineno):
    if value < min_value:
        raise DataError(f"line {lineno}: value {value} is below {min_value}")


def read_counts(path, min_value=0):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    return parse_counts(text, min_value)


def format_counts(counts):
    """Frequency-mode CSV text for a ``value -> count`` map."""
    rows = ["value,count"] + [f"{v},{c}" for v, c in sorted(counts.items()) if c > 0]
    return "\n".join(rows) + "\n"
