#!/usr/bin/env python3
"""Regenerate the committed test fixtures.

Deterministic: running this script twice produces byte-identical files. The golden
profile summary is computed here with plain counting so it stays independent of the
package's profiler implementation.
"""
from __future__ import annotations

import csv
import random
from pathlib import Path

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

LIAB_MAX_RAW = "2682301090.0"
LIAB_MAX = 2_682_301_090


def make_health_insurance() -> None:
    rng = random.Random(20260815)

    firsts = [
        "Acme", "Pioneer", "Summit", "Harbor", "Cascade", "Granite",
        "Beacon", "Liberty", "Sterling", "Monarch", "Evergreen", "Keystone",
    ]
    seconds = [
        "Health", "Mutual", "Assurance", "Care", "Benefit",
        "Family", "Medical", "Wellness", "Shield", "Trust",
    ]
    names = [f"{a} {b} Insurance" for a in firsts for b in seconds]  # 120 distinct
    insurer_types = ["HMO", "MCH", "A&H"]

    n_rows = 790

    company = [names[i % len(names)] for i in range(n_rows)]
    itype = [insurer_types[i % 3] for i in range(n_rows)]
    year = [str(2013 + (i % 10)) for i in range(n_rows)]
    assets = [str(rng.randrange(100_000, 9_999_999_999)) for _ in range(n_rows)]

    # Liabilities: exactly 757 distinct raw strings; min "0"; max float-formatted.
    mids = rng.sample(range(1, LIAB_MAX), 755)
    liabilities = ["0", LIAB_MAX_RAW] + [str(v) for v in mids]
    liabilities += [str(rng.choice(mids)) for _ in range(33)]
    assert len(liabilities) == n_rows
    assert len(set(liabilities)) == 757
    rng.shuffle(liabilities)

    premiums = [str(rng.randrange(0, 50_000_000)) for _ in range(n_rows)]

    header = ["Company Name", "Type of Insurer", "Year", "Total Assets",
              "Liabilities", "Premiums Written"]
    columns = [company, itype, year, assets, liabilities, premiums]

    FIXTURES.mkdir(parents=True, exist_ok=True)
    with open(FIXTURES / "health_insurance.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for i in range(n_rows):
            writer.writerow([col[i] for col in columns])

    # Golden rendered summary, by direct counting.
    lines = [
        f"Number of Rows: {n_rows}",
        "Number of Columns: 6",
        "Columns:",
    ]

    def block(name: str, types: str, coverage: str | None, unique: int) -> None:
        lines.append(f"  - Name: {name}")
        lines.append(f"    - Data Types: {types}")
        if coverage is not None:
            lines.append(f"    - Coverage: {coverage}")
        lines.append(f"    - Unique Values: {unique}")

    int_cov = lambda vals: f"{min(int(v) for v in vals)} to {max(int(v) for v in vals)}"
    block("Company Name", "Text", None, len(set(company)))
    block("Type of Insurer", "Text", None, len(set(itype)))
    block("Year", "Text, DateTime", "2013 to 2022", len(set(year)))
    block("Total Assets", "Integer", int_cov(assets), len(set(assets)))
    block("Liabilities", "Integer", f"0 to {LIAB_MAX_RAW}", len(set(liabilities)))
    block("Premiums Written", "Integer", int_cov(premiums), len(set(premiums)))

    (FIXTURES / "health_insurance_summary.txt").write_text("\n".join(lines) + "\n")


def make_sample100() -> None:
    rng = random.Random(1234)
    cities = ["Lisbon", "Oslo", "Prague", "Quito", "Rabat", "Seoul", "Tunis", "Vienna"]
    rows = [
        [str(i), cities[i % len(cities)], f"{rng.uniform(0.0, 40.0):.2f}"]
        for i in range(1, 101)
    ]
    with open(FIXTURES / "sample100.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["record_id", "city", "reading"])
        writer.writerows(rows)

    # Frozen oracle for row sampling: full Fisher-Yates shuffle, take the prefix.
    shuffled = list(rows)
    random.Random(7).shuffle(shuffled)
    print("sample_rows(seed=7, size=5) expected:")
    for r in shuffled[:5]:
        print(f"    {r!r},")

    # Frozen oracle for column-value sampling: distinct values in first-occurrence
    # order, same shuffle-prefix scheme.
    distinct_cities = list(dict.fromkeys(r[1] for r in rows))
    random.Random(3).shuffle(distinct_cities)
    print("sample_column_values(city, seed=3, size=4) expected:")
    print(f"    {distinct_cities[:4]!r}")


if __name__ == "__main__":
    make_health_insurance()
    make_sample100()
    print("fixtures written to", FIXTURES)
