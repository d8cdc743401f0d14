"""Dataset ingestion and deterministic sampling.

A dataset is a CSV file with a header row. Cells are kept as raw strings — type
interpretation happens in :mod:`datadesc.content_profile`. Sampling is seeded and
reproducible: the same (table, size, seed) always yields the same sample.
"""
from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ContractViolationError, MalformedInputError

# Literals treated as missing during profiling (case-sensitive), besides "".
MISSING_LITERALS = frozenset({"NA", "N/A", "null", "NULL", "-"})


def is_missing(value: str) -> bool:
    """True when a raw cell counts as missing for profiling purposes."""
    return value == "" or value in MISSING_LITERALS


@dataclass
class TableHandle:
    """An ingested dataset: header, raw rows, and catalog metadata."""

    dataset_id: str
    title: str
    column_names: list[str]
    rows: list[list[str]]
    description: str | None = None
    source_path: Path | None = None

    @property
    def row_count(self) -> int:
        return len(self.rows)

    @property
    def column_count(self) -> int:
        return len(self.column_names)

    def column_values(self, index: int) -> list[str]:
        if not 0 <= index < self.column_count:
            raise ContractViolationError(
                f"column index {index} out of range for {self.column_count} columns"
            )
        return [row[index] for row in self.rows]


@dataclass
class RowSample:
    """A deterministic sample of rows, carrying the header for rendering."""

    column_names: list[str]
    rows: list[list[str]]
    seed: int
    sample_size: int


def ingest_csv(
    path: str | Path,
    dataset_id: str | None = None,
    title: str | None = None,
    description: str | None = None,
) -> TableHandle:
    """Read a CSV file into a :class:`TableHandle`.

    The first row is the header. Ragged data rows are normalized to the header
    width: short rows are padded with empty cells, long rows are truncated.

    Raises:
        MalformedInputError: empty file or a header with no columns.
        OSError: unreadable path.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedInputError(f"{path}: file is empty, expected a header row")
        if not header or all(name == "" for name in header):
            raise MalformedInputError(f"{path}: header row has no columns")
        width = len(header)
        rows = []
        for row in reader:
            if len(row) < width:
                row = row + [""] * (width - len(row))
            elif len(row) > width:
                row = row[:width]
            rows.append(row)
    return TableHandle(
        dataset_id=dataset_id or path.stem,
        title=title or path.stem,
        column_names=header,
        rows=rows,
        description=description,
        source_path=path,
    )


def sample_rows(table: TableHandle, sample_size: int, seed: int) -> RowSample:
    """Sample ``sample_size`` rows uniformly without replacement.

    Implemented as a seeded full shuffle of the row indices followed by taking
    the prefix, so the result is a deterministic function of (rows, size, seed).
    When ``sample_size`` covers the whole table, all rows are returned in their
    original order.
    """
    if sample_size < 0:
        raise ContractViolationError(f"sample_size must be >= 0, got {sample_size}")
    if sample_size >= table.row_count:
        picked = list(table.rows)
    else:
        indices = list(range(table.row_count))
        random.Random(seed).shuffle(indices)
        picked = [table.rows[i] for i in indices[:sample_size]]
    return RowSample(
        column_names=list(table.column_names),
        rows=picked,
        seed=seed,
        sample_size=sample_size,
    )


def sample_column_values(
    table: TableHandle, column_index: int, sample_size: int, seed: int
) -> list[str]:
    """Sample up to ``sample_size`` distinct non-missing values from one column.

    Distinct values are collected in first-occurrence order, shuffled with the
    seed, and the prefix is returned — fewer values when the column has fewer
    distinct non-missing entries.
    """
    if sample_size < 0:
        raise ContractViolationError(f"sample_size must be >= 0, got {sample_size}")
    values = table.column_values(column_index)
    distinct = list(dict.fromkeys(v for v in values if not is_missing(v)))
    if sample_size >= len(distinct):
        # Still shuffle for consistency? No: the contract is "up to size distinct
        # values, deterministic per seed"; returning all of them keeps first-
        # occurrence order, mirroring sample_rows' whole-table behaviour.
        return distinct
    random.Random(seed).shuffle(distinct)
    return distinct[:sample_size]


def render_sample_block(sample: RowSample) -> str:
    """Render a sample as the header plus comma-joined rows, one per line."""
    lines = [",".join(sample.column_names)]
    lines.extend(",".join(row) for row in sample.rows)
    return "\n".join(lines)


@dataclass
class ManifestEntry:
    """One corpus dataset: id, catalog title, optional description, CSV path."""

    dataset_id: str
    title: str
    csv_path: Path
    description: str | None = None


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    """Load a JSON-lines corpus manifest.

    Each line is an object with ``dataset_id``, ``title``, ``csv_path`` and an
    optional (nullable) ``description``. Relative CSV paths resolve against the
    manifest's directory. Duplicate dataset ids are rejected.
    """
    path = Path(path)
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedInputError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            missing = [k for k in ("dataset_id", "title", "csv_path") if k not in obj]
            if missing:
                raise MalformedInputError(
                    f"{path}:{lineno}: manifest entry missing keys {missing}"
                )
            dataset_id = str(obj["dataset_id"])
            if dataset_id in seen:
                raise MalformedInputError(f"{path}:{lineno}: duplicate dataset_id {dataset_id!r}")
            seen.add(dataset_id)
            csv_path = Path(obj["csv_path"])
            if not csv_path.is_absolute():
                csv_path = path.parent / csv_path
            entries.append(
                ManifestEntry(
                    dataset_id=dataset_id,
                    title=str(obj["title"]),
                    csv_path=csv_path,
                    description=obj.get("description"),
                )
            )
    return entries


def load_table(entry: ManifestEntry) -> TableHandle:
    """Ingest the CSV behind a manifest entry, carrying over its metadata."""
    return ingest_csv(
        entry.csv_path,
        dataset_id=entry.dataset_id,
        title=entry.title,
        description=entry.description,
    )
