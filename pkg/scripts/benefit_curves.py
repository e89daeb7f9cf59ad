#!/usr/bin/env python3
"""Print the upload-vs-extend benefit comparison per process count.

For every process count in a hardware profile, prints the normalized benefit
of one extra cache block (I) against homing one chunk on GPU (J) and which
action the planner would take first.  Both are linear in the chunk length, so
the chosen reference length only scales the numbers.

Usage:
    python scripts/benefit_curves.py --hardware hardware/dev_server_4gpu.json
"""

import argparse
import csv
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from offplan import benefit_I, benefit_J, load_hardware_profile  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--hardware",
        default=str(Path(__file__).resolve().parents[1] / "hardware" / "dev_server_4gpu.json"),
    )
    parser.add_argument("--chunk-elements", type=int, default=10**9)
    args = parser.parse_args()

    hw = load_hardware_profile(Path(args.hardware).read_text())
    writer = csv.writer(sys.stdout)
    writer.writerow(["n", "benefit_extend_I", "benefit_upload_J", "first_action"])
    for n in sorted(hw.tables):
        i_val = benefit_I(n, args.chunk_elements, hw)
        j_val = benefit_J(n, args.chunk_elements, hw)
        action = "upload_chunk" if j_val > i_val else "extend_rcache"
        writer.writerow([n, f"{i_val:.6f}", f"{j_val:.6f}", action])
    return 0


if __name__ == "__main__":
    sys.exit(main())
