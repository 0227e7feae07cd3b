"""Versioned CSV emission and ingestion.

Files carry their schema name on the first line (``#schema=sweep.v1``) so a
reader can refuse data written for a different column contract. Floats are
written with repr so rereading loses nothing and identical runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import io

from .errors import SchemaError


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def render_csv(schema: str, header: list[str], rows) -> str:
    buf = io.StringIO()
    buf.write(f"#schema={schema}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise SchemaError(
                f"row has {len(row)} cells, header has {len(header)}"
            )
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path: str, schema: str, header: list[str], rows) -> None:
    text = render_csv(schema, header, rows)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def read_csv(path: str, expected_schema: str) -> tuple[list[str], list[list[str]]]:
    """Return (header, rows); raise SchemaError on version or shape trouble."""
    try:
        with open(path, newline="") as fh:
            first = fh.readline().strip()
            prefix = "#schema="
            if not first.startswith(prefix):
                raise SchemaError(f"{path}: missing schema line")
            found = first[len(prefix):]
            if found != expected_schema:
                raise SchemaError(
                    f"{path}: schema {found!r}, expected {expected_schema!r}"
                )
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError(f"{path}: no header row")
            rows = [row for row in reader if row]
    except OSError as exc:
        raise SchemaError(f"{path}: {exc}")
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return header, rows


def column(header: list[str], rows: list[list[str]], name: str) -> list[str]:
    try:
        idx = header.index(name)
    except ValueError:
        raise SchemaError(f"missing column {name!r}")
    return [row[idx] for row in rows]
