"""Small readers and writers for the flat key-value and CSV formats."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .errors import ParseError


def read_kv(path) -> dict[str, float | str]:
    """Read a flat ``key = value`` text file.

    Blank lines and ``#`` comments are ignored. Values that parse as floats
    are returned as floats, everything else as stripped strings.
    """
    out: dict[str, float | str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, value = line.split("=", 1)
        elif ":" in line:
            key, value = line.split(":", 1)
        else:
            raise ParseError(f"expected 'key = value', got {raw!r}", line=lineno)
        key = key.strip()
        value = value.strip().strip('"').strip("'")
        if not key:
            raise ParseError("empty key", line=lineno)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", line=lineno)
        try:
            out[key] = float(value)
        except ValueError:
            out[key] = value
    return out


def write_kv(path, values: Mapping[str, object]) -> None:
    lines = []
    for key, value in values.items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv_checked(
    path,
    required: Iterable[str],
    numeric: Iterable[str] = (),
    optional_numeric: Iterable[str] = (),
) -> pd.DataFrame:
    """Read a CSV, check the header and coerce numeric columns.

    Raises
    ------
    ParseError
        For a missing column or a non-numeric cell; the error carries the
        1-based file line (the header is line 1).
    """
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ParseError(str(exc)) from exc
    except pd.errors.EmptyDataError as exc:
        raise ParseError("empty file", line=1) from exc
    df.columns = [c.strip() for c in df.columns]
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise ParseError(f"{Path(path).name}: missing columns {missing}", line=1)
    for col in list(numeric) + list(optional_numeric):
        if col not in df.columns:
            continue
        allow_blank = col in set(optional_numeric)
        values = np.empty(len(df))
        for i, cell in enumerate(df[col].str.strip()):
            if cell == "" and allow_blank:
                values[i] = math.nan
                continue
            try:
                values[i] = float(cell)
            except ValueError:
                raise ParseError(
                    f"{Path(path).name}: column {col!r} has non-numeric value {cell!r}",
                    line=i + 2,
                ) from None
            if math.isnan(values[i]) and not allow_blank:
                raise ParseError(f"{Path(path).name}: column {col!r} is NaN", line=i + 2)
        df[col] = values
    return df


def write_csv(path, df: pd.DataFrame) -> None:
    # fixed float format and line endings so repeated runs are byte-identical
    df.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
