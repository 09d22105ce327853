"""Versioned CSV emission and parsing for reports.

Every report starts with a schema line ``# spreadpool-csv v<version> <kind>``
followed by optional ``#`` comment lines, the header row, and data rows.
Parsers reject unknown schema versions.
"""

from __future__ import annotations

import csv
import io

from .errors import DatasetIOError

__all__ = ["CSV_VERSION", "read_report", "write_report"]

CSV_VERSION = 1
_SCHEMA_PREFIX = "# spreadpool-csv"


def write_report(path, kind: str, columns: list[str], rows: list[dict],
                 comments: list[str] | None = None) -> None:
    """Write rows (dicts keyed by column name) with the schema header."""
    buf = io.StringIO()
    buf.write(f"{_SCHEMA_PREFIX} v{CSV_VERSION} {kind}\n")
    for line in comments or []:
        buf.write(f"# {line}\n")
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row.get(c, "") for c in columns})
    try:
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise DatasetIOError(f"cannot write report to {path}: {exc}") from exc


def read_report(path):
    """Parse a report; returns (kind, comments, rows as list of dicts)."""
    try:
        with open(path, "r", newline="") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DatasetIOError(f"cannot read report from {path}: {exc}") from exc
    if not lines or not lines[0].startswith(_SCHEMA_PREFIX):
        raise DatasetIOError(f"{path}: missing schema header line")
    parts = lines[0][len(_SCHEMA_PREFIX):].split()
    if len(parts) < 2 or not parts[0].startswith("v"):
        raise DatasetIOError(f"{path}: malformed schema line {lines[0]!r}")
    try:
        version = int(parts[0][1:])
    except ValueError:
        raise DatasetIOError(f"{path}: malformed schema version {parts[0]!r}")
    if version != CSV_VERSION:
        raise DatasetIOError(f"{path}: unsupported csv schema version {version}")
    kind = parts[1]
    comments = []
    body_start = 1
    for i in range(1, len(lines)):
        if lines[i].startswith("#"):
            comments.append(lines[i][1:].strip())
            body_start = i + 1
        else:
            body_start = i
            break
    reader = csv.DictReader(lines[body_start:])
    return kind, comments, list(reader)
