"""Algorithmic (LLM-free) dataset content profiling.

For every column the profiler scans *all* rows and derives inferred data types,
value coverage, and uniqueness. The rendered summary follows a fixed plain-text
layout so downstream prompts and goldens are byte-stable::

    Number of Rows: 790
    Number of Columns: 6
    Columns:
      - Name: Year
        - Data Types: Text, DateTime
        - Coverage: 2013 to 2022
        - Unique Values: 10

Typing rule: a type in {Integer, Float, Boolean, DateTime} is assigned when at
least 95% of the non-missing values parse as it. Integer-formatted strings also
parse as floats, so Integer subsumes Float when both qualify. Columns made of
bare 4-digit years are labelled {Text, DateTime}: a year is both a label and a
timestamp. Text is also assigned whenever some value fails every typed parse,
and is the fallback when nothing else qualifies.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime

from .tables import TableHandle, is_missing

# Display order for rendered type lists.
TYPE_ORDER = ("Text", "Integer", "Float", "Boolean", "DateTime")

_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$")
_YEAR_RE = re.compile(r"^\d{4}$")
_BOOL_WORDS = frozenset({"true", "false", "yes", "no"})

# Accepted datetime shapes: (regex, strptime format, canonical render format).
_DT_SHAPES = (
    (re.compile(r"^\d{4}-\d{2}$"), "%Y-%m", "%Y-%m"),
    (re.compile(r"^\d{4}-\d{2}-\d{2}$"), "%Y-%m-%d", "%Y-%m-%d"),
    (re.compile(r"^\d{4}-\d{2}-\d{2} \d{2}:\d{2}$"), "%Y-%m-%d %H:%M", "%Y-%m-%d %H:%M"),
    (re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}$"), "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"),
    (
        re.compile(r"^\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2}$"),
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
    ),
    (
        re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}$"),
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
    ),
    (re.compile(r"^\d{2}/\d{2}/\d{4}$"), "%m/%d/%Y", "%Y-%m-%d"),
    (re.compile(r"^\d{2}/\d{2}/\d{4} \d{2}:\d{2}$"), "%m/%d/%Y %H:%M", "%Y-%m-%d %H:%M"),
)


def _parse_year(value: str) -> datetime | None:
    if _YEAR_RE.match(value) and 1000 <= int(value) <= 2999:
        return datetime(int(value), 1, 1)
    return None


def parse_datetime(value: str) -> tuple[datetime, str] | None:
    """Parse a cell against the accepted datetime shapes.

    Returns the timestamp plus its canonical render at the granularity of the
    source string (a bare year renders back as "2013"), or None.
    """
    year = _parse_year(value)
    if year is not None:
        return year, value
    for pattern, fmt, render_fmt in _DT_SHAPES:
        if pattern.match(value):
            try:
                parsed = datetime.strptime(value, fmt)
            except ValueError:
                return None
            return parsed, parsed.strftime(render_fmt)
    return None


@dataclass
class ColumnStats:
    """Per-column profiling result. Coverage fields are None when not applicable."""

    name: str
    inferred_types: tuple[str, ...]
    unique_count: int
    missing_count: int
    numeric_min: float | None = None
    numeric_max: float | None = None
    numeric_min_text: str | None = None
    numeric_max_text: str | None = None
    temporal_min: datetime | None = None
    temporal_max: datetime | None = None
    temporal_min_text: str | None = None
    temporal_max_text: str | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "inferred_types": list(self.inferred_types),
            "unique_count": self.unique_count,
            "missing_count": self.missing_count,
            "numeric_min": self.numeric_min,
            "numeric_max": self.numeric_max,
            "numeric_min_text": self.numeric_min_text,
            "numeric_max_text": self.numeric_max_text,
            "temporal_min": self.temporal_min.isoformat() if self.temporal_min else None,
            "temporal_max": self.temporal_max.isoformat() if self.temporal_max else None,
            "temporal_min_text": self.temporal_min_text,
            "temporal_max_text": self.temporal_max_text,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ColumnStats":
        return cls(
            name=obj["name"],
            inferred_types=tuple(obj["inferred_types"]),
            unique_count=obj["unique_count"],
            missing_count=obj["missing_count"],
            numeric_min=obj.get("numeric_min"),
            numeric_max=obj.get("numeric_max"),
            numeric_min_text=obj.get("numeric_min_text"),
            numeric_max_text=obj.get("numeric_max_text"),
            temporal_min=(
                datetime.fromisoformat(obj["temporal_min"]) if obj.get("temporal_min") else None
            ),
            temporal_max=(
                datetime.fromisoformat(obj["temporal_max"]) if obj.get("temporal_max") else None
            ),
            temporal_min_text=obj.get("temporal_min_text"),
            temporal_max_text=obj.get("temporal_max_text"),
        )


@dataclass
class ContentProfile:
    """Whole-table profile: dimensions plus per-column stats in column order."""

    row_count: int
    column_count: int
    columns: list[ColumnStats] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "row_count": self.row_count,
                "column_count": self.column_count,
                "columns": [c.to_dict() for c in self.columns],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ContentProfile":
        obj = json.loads(text)
        return cls(
            row_count=obj["row_count"],
            column_count=obj["column_count"],
            columns=[ColumnStats.from_dict(c) for c in obj["columns"]],
        )


def _meets_threshold(count: int, total: int) -> bool:
    # count/total >= 0.95, in exact integer arithmetic.
    return total > 0 and 20 * count >= 19 * total


def _profile_column(name: str, values: list[str], row_count: int) -> ColumnStats:
    non_missing = [v for v in values if not is_missing(v)]
    missing_count = row_count - len(non_missing)
    unique_count = len(set(non_missing))
    if not non_missing:
        return ColumnStats(
            name=name,
            inferred_types=("Text",),
            unique_count=0,
            missing_count=missing_count,
        )

    n = len(non_missing)
    int_count = float_count = bool_count = dt_count = year_count = 0
    any_unparsed = False

    # Numeric extremes. *_has_int records whether any raw string attaining the
    # extreme was integer-formatted; that drives int-vs-float rendering and is
    # insensitive to row order.
    num_min = num_max = None
    num_min_has_int = num_max_has_int = False
    # Temporal extremes as (timestamp, canonical render); the render breaks
    # timestamp ties deterministically.
    temp_min = temp_max = None

    for v in non_missing:
        is_int = bool(_INT_RE.match(v))
        is_float = bool(_FLOAT_RE.match(v))
        is_bool = v.lower() in _BOOL_WORDS
        dt = parse_datetime(v)

        if is_int:
            int_count += 1
        if is_float:
            float_count += 1
        if is_bool:
            bool_count += 1
        if dt is not None:
            dt_count += 1
            if _parse_year(v) is not None:
                year_count += 1
            if temp_min is None or dt < temp_min:
                temp_min = dt
            if temp_max is None or dt > temp_max:
                temp_max = dt
        if not (is_int or is_float or is_bool or dt is not None):
            any_unparsed = True

        if is_float:
            x = float(v)
            if num_min is None or x < num_min:
                num_min, num_min_has_int = x, is_int
            elif x == num_min:
                num_min_has_int = num_min_has_int or is_int
            if num_max is None or x > num_max:
                num_max, num_max_has_int = x, is_int
            elif x == num_max:
                num_max_has_int = num_max_has_int or is_int

    if _meets_threshold(year_count, n):
        # Bare-year column: both a set of text labels and a time axis.
        types: list[str] = ["Text", "DateTime"]
        numeric = False
        temporal = True
    else:
        types = []
        if _meets_threshold(int_count, n):
            types.append("Integer")
        elif _meets_threshold(float_count, n):
            types.append("Float")
        if _meets_threshold(bool_count, n):
            types.append("Boolean")
        if _meets_threshold(dt_count, n):
            types.append("DateTime")
        if any_unparsed or not types:
            types.insert(0, "Text")
        numeric = "Integer" in types or "Float" in types
        temporal = "DateTime" in types

    stats = ColumnStats(
        name=name,
        inferred_types=tuple(sorted(types, key=TYPE_ORDER.index)),
        unique_count=unique_count,
        missing_count=missing_count,
    )
    if numeric and num_min is not None:
        stats.numeric_min = num_min
        stats.numeric_max = num_max
        stats.numeric_min_text = str(int(num_min)) if num_min_has_int else repr(num_min)
        stats.numeric_max_text = str(int(num_max)) if num_max_has_int else repr(num_max)
    if temporal and temp_min is not None:
        stats.temporal_min, stats.temporal_min_text = temp_min
        stats.temporal_max, stats.temporal_max_text = temp_max
    return stats


def profile_table(table: TableHandle) -> ContentProfile:
    """Profile every column of a table (scans all rows; no sampling here)."""
    profile = ContentProfile(
        row_count=table.row_count,
        column_count=table.column_count,
    )
    for index, name in enumerate(table.column_names):
        values = [row[index] for row in table.rows]
        profile.columns.append(_profile_column(name, values, table.row_count))
    return profile


def render_content_summary(profile: ContentProfile) -> str:
    """Render a profile in the fixed plain-text layout (trailing newline)."""
    lines = [
        f"Number of Rows: {profile.row_count}",
        f"Number of Columns: {profile.column_count}",
        "Columns:",
    ]
    for col in profile.columns:
        lines.append(f"  - Name: {col.name}")
        lines.append(f"    - Data Types: {', '.join(col.inferred_types)}")
        coverage = _coverage_text(col)
        if coverage is not None:
            lines.append(f"    - Coverage: {coverage}")
        lines.append(f"    - Unique Values: {col.unique_count}")
    return "\n".join(lines) + "\n"


def _coverage_text(col: ColumnStats) -> str | None:
    if col.numeric_min_text is not None:
        return f"{col.numeric_min_text} to {col.numeric_max_text}"
    if col.temporal_min_text is not None:
        return f"{col.temporal_min_text} to {col.temporal_max_text}"
    return None
