#!/usr/bin/env python3
"""End-to-end pipeline on one preset: profile -> plan -> step simulation.

Usage:
    python scripts/run_pipeline.py --preset gpt2-10b \
        --hardware hardware/dev_server_4gpu.json --outdir out/
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from offplan.cli import main as cli_main  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--preset", default="gpt2-10b")
    parser.add_argument(
        "--hardware",
        default=str(Path(__file__).resolve().parents[1] / "hardware" / "dev_server_4gpu.json"),
    )
    parser.add_argument("--outdir", default="out")
    args = parser.parse_args()

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    model = outdir / f"{args.preset}.json"
    plan = outdir / f"{args.preset}.plan.json"
    report = outdir / f"{args.preset}.report.json"

    for argv in (
        ["gen-profile", "--preset", args.preset, "-o", str(model)],
        ["plan", "--model", str(model), "--hardware", args.hardware, "-o", str(plan)],
        ["simulate", "--plan", str(plan), "--model", str(model),
         "--hardware", args.hardware, "-o", str(report)],
    ):
        status = cli_main(argv)
        if status != 0:
            return status
    print(f"\nartifacts: {model}, {plan}, {report}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
