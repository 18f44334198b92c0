#!/usr/bin/env python3
"""Emit the synthetic corpora as long-format CSVs for CLI experiments.

Writes <outdir>/source.csv (pretraining family), <outdir>/target.csv
(shifted family), and <outdir>/overfit.csv.
"""

import argparse
from pathlib import Path

from tgpt.synthetic import SHIFTED_FAMILY, family_dataset, overfit_corpus
from tgpt.timeseries import Role, write_long_csv


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--outdir", default="data", help="output directory")
    parser.add_argument("--n-source", type=int, default=2000)
    parser.add_argument("--n-target", type=int, default=200)
    parser.add_argument("--seed", type=int, default=101)
    args = parser.parse_args()

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    jobs = [
        ("source.csv", family_dataset(args.n_source, seed=args.seed,
                                      role=Role.SOURCE)),
        ("target.csv", family_dataset(args.n_target, seed=args.seed + 1,
                                      params=SHIFTED_FAMILY)),
        ("overfit.csv", overfit_corpus(seed=args.seed + 2)),
    ]
    for name, ds in jobs:
        path = outdir / name
        with open(path, "w", newline="") as fh:
            write_long_csv(ds, fh)
        print(f"wrote {path} ({len(ds)} series)")


if __name__ == "__main__":
    main()
