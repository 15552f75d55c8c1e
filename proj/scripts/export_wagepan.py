#!/usr/bin/env python3
"""Export the wage panel to the long CSV format this project ingests.

The source is the `wagepan` dataset (545 workers observed 1980-1987). Two
ways to obtain it:

  * pip install wooldridge, then run this script with no arguments, or
  * in R: `write.csv(wooldridge::wagepan, "wagepan_raw.csv", row.names=FALSE)`
    and run this script with --raw wagepan_raw.csv.

The export keeps the first four years (1980-1983), uses union membership as
the time-varying treatment `a`, puts the 1983 log wage in `y` on the final
row, and keeps log wage as a time-varying covariate in earlier years.

Usage:
    python3 scripts/export_wagepan.py [--raw wagepan_raw.csv] [-o data/wagepan_long.csv]
"""

import argparse
import csv
import sys

YEARS = [1980, 1981, 1982, 1983]
COVARIATES = ["educ", "black", "hisp", "married", "poorhlth", "exper", "hours", "south"]


def load_raw(path):
    if path:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    try:
        import wooldridge  # type: ignore
    except ImportError:
        sys.exit(
            "no --raw file given and the 'wooldridge' package is not installed; "
            "see the module docstring for the R export recipe"
        )
    frame = wooldridge.data("wagepan")
    return frame.to_dict("records")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--raw", help="CSV export of the raw wagepan data frame")
    ap.add_argument("-o", "--out", default="data/wagepan_long.csv")
    args = ap.parse_args()

    rows = load_raw(args.raw)
    by_worker = {}
    for row in rows:
        year = int(float(row["year"]))
        if year not in YEARS:
            continue
        by_worker.setdefault(str(row["nr"]), {})[year] = row

    header = ["id", "t", "a", "y"] + COVARIATES + ["lwage"]
    n_written = 0
    with open(args.out, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for worker in sorted(by_worker, key=lambda s: int(s)):
            years = by_worker[worker]
            if sorted(years) != YEARS:
                continue  # keep the balanced panel only
            for t, year in enumerate(YEARS, start=1):
                row = years[year]
                record = [worker, t, int(float(row["union"]))]
                if t == len(YEARS):
                    record.append(float(row["lwage"]))
                else:
                    record.append("")
                record += [float(row[c]) for c in COVARIATES]
                # Log wage is a covariate before the outcome year only.
                record.append(float(row["lwage"]) if t < len(YEARS) else "")
                out.writerow(record)
            n_written += 1
    print(f"wrote {args.out}: {n_written} workers x {len(YEARS)} years")


if __name__ == "__main__":
    main()
