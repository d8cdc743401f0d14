from __future__ import annotations

import csv
from pathlib import Path

import pytest

from datadesc.tables import TableHandle

FIXTURES = Path(__file__).parent / "fixtures"


def write_csv(path: Path, header: list[str], rows: list[list[str]]) -> Path:
    """The test fixture writer: emit a CSV the way the package expects to read it."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def make_table(
    columns: dict[str, list[str]],
    dataset_id: str = "t",
    title: str = "t",
    description: str | None = None,
) -> TableHandle:
    """Build an in-memory table from {column name: values}."""
    names = list(columns)
    length = len(next(iter(columns.values()))) if columns else 0
    for name, vals in columns.items():
        assert len(vals) == length, f"column {name} has inconsistent length"
    rows = [[columns[name][i] for name in names] for i in range(length)]
    return TableHandle(
        dataset_id=dataset_id,
        title=title,
        column_names=names,
        rows=rows,
        description=description,
    )


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def mock_corpus(tmp_path: Path) -> Path:
    """A writable copy of the scripted corpus fixture (config + CSVs + bench).

    Copying keeps run outputs inside tmp_path and exercises the resolution of
    config-relative paths against wherever the config file actually lives.
    """
    import shutil

    target = tmp_path / "corpus"
    shutil.copytree(FIXTURES / "mock_corpus", target)
    return target
