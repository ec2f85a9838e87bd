#!/usr/bin/env python3
"""Compare walker, finite-difference and Poisson estimates of harmonic measure on dyadic arcs."""

import argparse

import numpy as np

from ample_sawtooth.drift import uniform_small, zero_drift
from ample_sawtooth.geometry import UnitBall
from ample_sawtooth.measure import (DyadicPartition, WalkerConfig, estimate_measure, fd_arc_measures,
                                    poisson_measure_closed)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps-hat", type=float, default=0.0, help="uniform drift strength (0 for no drift)")
    ap.add_argument("--pole", type=float, nargs=2, default=(0.5, 0.0))
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--walkers", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()

    spec = uniform_small(a.eps_hat) if a.eps_hat > 0 else zero_drift()
    part = DyadicPartition(2, a.k)
    est = estimate_measure(a.pole, UnitBall(2), spec, part, a.walkers, WalkerConfig(seed=a.seed))
    fd, h = fd_arc_measures(spec, a.pole, part.arcs(), h=0.02)
    print(f"{'arc':>10} {'walkers':>9} {'stderr':>8} {'fd':>9}" + ("" if a.eps_hat else f" {'poisson':>9}"))
    for lab, (lo, hi), m, s, f in zip(part.labels, part.arcs(), est.mass, est.stderr, fd):
        line = f"{lab:>10} {m:9.5f} {s:8.5f} {f:9.5f}"
        if not a.eps_hat:
            line += f" {poisson_measure_closed(a.pole, (lo, hi)):9.5f}"
        print(line)
    print(f"fd mesh h={h:.3f}; escaped fraction {est.escaped_fraction:.2e}; total {np.sum(est.mass):.4f}")


if __name__ == "__main__":
    main()
