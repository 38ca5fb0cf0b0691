#!/usr/bin/env python3
# scripts/make_fixtures.py

"""Draw a gas-turbine-schema CSV from the distribution behind tests/fixtures/gas_turbine_sample.csv."""

import argparse
import sys

from rich.console import Console

from viforge.data.csv_io import write_csv
from viforge.data.generators import gen_gas_turbine_like
from viforge.numerics.rng import RngStream

console = Console()


def main() -> int:
    parser = argparse.ArgumentParser(description="Generate test fixtures")
    parser.add_argument("--out", default="results/gas_turbine_sample.csv")
    parser.add_argument("--rows", type=int, default=500)
    parser.add_argument("--seed", type=int, default=2015)
    args = parser.parse_args()

    data = gen_gas_turbine_like(args.rows, RngStream(seed=args.seed))
    path = write_csv(data, args.out, target_column="NOX")
    console.print(f"[green]✔[/green] wrote {data.n_samples} rows to {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
