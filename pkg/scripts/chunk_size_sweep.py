#!/usr/bin/env python3
"""Chunk-length sweep over all built-in presets, one CSV per preset.

Reproduces the packing-quality numbers behind the search: for each candidate
length, the chunk count, padding waste, and the bytes replaced in the cache
during one simulated step under the default budget.

Usage:
    python scripts/chunk_size_sweep.py --outdir out/sweeps
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from offplan.cli import PRESETS, main as cli_main  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--hardware",
        default=str(Path(__file__).resolve().parents[1] / "hardware" / "dev_server_4gpu.json"),
    )
    parser.add_argument("--outdir", default="out/sweeps")
    args = parser.parse_args()

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for preset in sorted(PRESETS):
        model = outdir / f"{preset}.json"
        sweep = outdir / f"{preset}.sweep.csv"
        if cli_main(["gen-profile", "--preset", preset, "-o", str(model)]) != 0:
            return 1
        if cli_main(["sweep", "--model", str(model), "--hardware", args.hardware,
                     "-o", str(sweep)]) != 0:
            return 1
        best = min(
            (line.split(",") for line in sweep.read_text().splitlines()[1:]),
            key=lambda row: (int(row[3]), float(row[2]), int(row[0])),
        )
        print(f"{preset}: best chunk_length={best[0]} "
              f"(waste={best[2]}, replaced={best[3]}) -> {sweep}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
