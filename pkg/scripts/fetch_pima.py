#!/usr/bin/env python3
"""Materialize data/pima.csv (n=532, 7 covariates) for the data-backed tests.

Two sources are supported:

1. Default: download the two complete-record partitions of the Pima Indians
   diabetes data (Ripley's split, 200 + 332 rows) from the Rdatasets mirror
   and concatenate them.

2. ``--from-uci FILE``: convert a local copy of the original 768-row UCI
   file (pima-indians-diabetes.csv, no header, 9 columns).  Records with a
   zero in glucose, blood pressure, skin fold or BMI are incomplete and are
   dropped, as is the serum-insulin column; 532 complete records remain.

Output columns: npreg, glu, bp, skin, bmi, ped, age, type (0/1).
"""

import argparse
import csv
import io
import sys
import urllib.request
from pathlib import Path

BASE = "https://raw.githubusercontent.com/vincentarelbundock/Rdatasets/master/csv/MASS"
PARTS = ("Pima.tr.csv", "Pima.te.csv")
COLUMNS = ["npreg", "glu", "bp", "skin", "bmi", "ped", "age", "type"]


def from_mirror() -> list[list[str]]:
    rows = []
    for part in PARTS:
        with urllib.request.urlopen(f"{BASE}/{part}", timeout=60) as resp:
            text = resp.read().decode("utf-8")
        reader = csv.DictReader(io.StringIO(text))
        for record in reader:
            rows.append([record[c] if c != "type" else
                         ("1" if record["type"].strip().lower() == "yes" else "0")
                         for c in COLUMNS])
    return rows


def from_uci(path: Path) -> list[list[str]]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for record in csv.reader(fh):
            if not record or not record[0].strip().isdigit():
                continue  # header or blank
            npreg, glu, bp, skin, insulin, bmi, ped, age, label = record
            if any(float(v) == 0.0 for v in (glu, bp, skin, bmi)):
                continue
            rows.append([npreg, glu, bp, skin, bmi, ped, age, label])
    return rows


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--from-uci", type=Path, default=None,
                        help="convert a local UCI 768-row file instead of downloading")
    parser.add_argument("--out", type=Path,
                        default=Path(__file__).resolve().parent.parent / "data" / "pima.csv")
    args = parser.parse_args()
    rows = from_uci(args.from_uci) if args.from_uci else from_mirror()
    if len(rows) != 532:
        print(f"expected 532 complete records, got {len(rows)}", file=sys.stderr)
        return 1
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(COLUMNS)
        out.writerows(rows)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
