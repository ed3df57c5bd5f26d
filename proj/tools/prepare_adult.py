#!/usr/bin/env python3
"""Convert the raw UCI Adult files into the CSV + schema pair the bench reads.

Usage: prepare_adult.py <dir-with-adult.data-adult.test-adult.names> <out-dir>

Rows containing '?' are dropped (the loader rejects missing cells). The test
file's trailing '.' on labels is stripped so both files share one label set.
"""
import csv
import json
import os
import sys

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
]
LABEL = "income"


def read_schema(names_path):
    kinds = {}
    with open(names_path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("|") or ":" not in line:
                continue
            name, rest = line.split(":", 1)
            if name not in COLUMNS:
                continue
            rest = rest.strip().rstrip(".")
            if rest == "continuous":
                kinds[name] = {"name": name, "kind": "numeric"}
            else:
                cats = [c.strip() for c in rest.split(",")]
                kinds[name] = {"name": name, "kind": "categorical", "categories": cats}
    missing = [c for c in COLUMNS if c not in kinds]
    if missing:
        sys.exit(f"adult.names lacks columns: {missing}")
    return {
        "features": [kinds[c] for c in COLUMNS],
        "label": LABEL,
        "positive": ">50K",
        "label_values": ["<=50K", ">50K"],
    }


def read_rows(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != len(COLUMNS) + 1:
                continue
            if "?" in cells:
                continue
            cells[-1] = cells[-1].rstrip(".")
            rows.append(cells)
    return rows


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    src, out = sys.argv[1], sys.argv[2]
    os.makedirs(out, exist_ok=True)
    schema = read_schema(os.path.join(src, "adult.names"))
    rows = read_rows(os.path.join(src, "adult.data")) + read_rows(os.path.join(src, "adult.test"))
    with open(os.path.join(out, "adult.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS + [LABEL])
        writer.writerows(rows)
    with open(os.path.join(out, "adult.schema.json"), "w") as fh:
        json.dump(schema, fh, indent=2)
        fh.write("\n")
    print(f"wrote {len(rows)} rows to {out}")


if __name__ == "__main__":
    main()
