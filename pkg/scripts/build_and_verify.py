#!/usr/bin/env python3
"""Build a sawtooth for a cone-singular drift and run every claim check on it."""

import argparse
import sys

from ample_sawtooth.cli import main


def run(out, drift, walkers, seed):
    steps = [
        ["decompose", "--kmax", "6"],
        ["classify-drift", "--drift", drift, "--kmax", "6"],
        ["build-sawtooth", "--drift", drift, "--kmax", "6"],
        ["verify-claims", "--drift", drift, "--walkers", str(walkers), "--seed", str(seed)],
    ]
    for argv in steps:
        code = main(argv + ["--out", out])
        if code:
            return code
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo_out")
    ap.add_argument("--drift", default="cone:0.5:4,18")
    ap.add_argument("--walkers", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    sys.exit(run(a.out, a.drift, a.walkers, a.seed))
