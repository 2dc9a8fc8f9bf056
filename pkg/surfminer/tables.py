"""Tab-delimited table files shared by every stage."""
import contextlib
import hashlib
import logging
import os
import typing

import pandas as pd

from .exceptions import CorruptArtifact, IoFailure, MissingArtifacts

logger = logging.getLogger("surfminer").getChild(__name__)

Row = typing.Sequence[typing.Any]

# column kinds understood by read_frame; untyped columns stay text
INT = "int64"
OPTIONAL_INT = "Int64"
FLOAT = "float64"
FLAG = "flag"

ColumnTypes = typing.Mapping[str, str]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(path, header: typing.Sequence[str], rows: typing.Iterable[Row]) -> int:
    frame = pd.DataFrame([[_cell(v) for v in row] for row in rows], columns=list(header), dtype=object)
    try:
        frame.to_csv(path, sep="\t", index=False, lineterminator="\n", encoding="utf-8")
    except OSError as e:
        raise IoFailure("Failed to write %s: %s" % (path, e)) from e

    logger.debug("Wrote %d rows to %s", len(frame), path)
    return len(frame)


def _typed(series: pd.Series, kind: str) -> pd.Series:
    if kind == INT:
        return series.astype("int64")
    if kind == FLAG:
        if not series.isin(("0", "1")).all():
            raise ValueError("expected 0 or 1")
        return series == "1"
    blanked = series.mask(series == "")
    if kind == OPTIONAL_INT:
        return pd.to_numeric(blanked, errors="raise").astype("Int64")
    if kind == FLOAT:
        return pd.to_numeric(blanked, errors="raise").astype("float64")
    raise AssertionError("Unknown column kind %s" % kind)


def read_frame(path, types: typing.Optional[ColumnTypes] = None) -> pd.DataFrame:
    """Read a table written by :func:`write_table`, converting the columns named in ``types``."""
    if not os.path.exists(path):
        raise MissingArtifacts("Missing table %s" % path)
    try:
        frame = pd.read_csv(
            path,
            sep="\t",
            dtype=str,
            keep_default_na=False,
            na_filter=False,
            skip_blank_lines=False,
            encoding="utf-8",
        )
    except OSError as e:
        raise IoFailure("Failed to read %s: %s" % (path, e)) from e
    except (ValueError, pd.errors.EmptyDataError) as e:
        raise CorruptArtifact("Unreadable table %s: %s" % (path, e)) from e
    if frame.isna().to_numpy().any():
        raise CorruptArtifact("Short row in %s" % path)

    for column, kind in (types or {}).items():
        if column not in frame.columns:
            raise CorruptArtifact("Table %s has no column %s" % (path, column))
        try:
            frame[column] = _typed(frame[column], kind)
        except (ValueError, TypeError) as e:
            raise CorruptArtifact("Bad value in %s column %s: %s" % (path, column, e)) from e
    return frame


def _plain(value):
    if value is pd.NA:
        return None
    if hasattr(value, "item"):
        return value.item()
    return value


def read_records(path, types: typing.Optional[ColumnTypes] = None) -> typing.List[typing.Dict[str, typing.Any]]:
    frame = read_frame(path, types)
    columns = list(frame.columns)
    return [
        {c: _plain(v) for c, v in zip(columns, row)} for row in frame.itertuples(index=False, name=None)
    ]


@contextlib.contextmanager
def parsing(path):
    """Turn lookup failures while rebuilding records from ``path`` into :class:`CorruptArtifact`."""
    try:
        yield
    except (ValueError, KeyError, IndexError) as e:
        raise CorruptArtifact("Inconsistent records in %s: %s" % (path, e)) from e


def file_checksum(path) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 16), b""):
                digest.update(chunk)
    except OSError as e:
        raise IoFailure("Failed to read %s: %s" % (path, e)) from e
    return digest.hexdigest()


def write_text(path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise IoFailure("Failed to write %s: %s" % (path, e)) from e
