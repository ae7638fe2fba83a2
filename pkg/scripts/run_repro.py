#!/usr/bin/env python3
"""Re-run the bundled three-node chain benchmark and print the band summary.

Equivalent to `locsysid repro-paper`; kept as a script so the experiment can
be launched and tweaked without going through the CLI.
"""

import argparse
import sys

from locsysid.harness import run_repro


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/repro")
    ap.add_argument("--seeds", default="0,1,2,3,4",
                    help="comma-separated seed list (default 0,1,2,3,4)")
    args = ap.parse_args()
    seeds = [int(s) for s in args.seeds.split(",") if s]
    summary = run_repro(out_dir=args.out, seeds=seeds)
    print(f"\nsummary written to {args.out}/repro_summary.json")
    return 0 if summary["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
