"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Reference values marked "oracle" come from computations independent of the
code under test (closed forms, quadrature of the Poisson kernel, brute-force
enumeration).
"""

import filecmp
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from ample_sawtooth import checks as C
from ample_sawtooth.cli import main as cli_main
from ample_sawtooth.drift import cone_singular, uniform_small, zero_drift
from ample_sawtooth.dyadic import DyadicCube, build_grid, verify_grid_properties
from ample_sawtooth.geometry import UnitBall
from ample_sawtooth.measure import (DyadicPartition, WalkerConfig, estimate_measure, fd_arc_measures,
                                    markov_identity_check, nested_disk_config, nested_disk_oracle,
                                    one_notch_config, poisson_measure_closed)
from ample_sawtooth.sawtooth import (brute_force_families, build_ample_sawtooth, extract_family_first,
                                     extract_family_next)
from ample_sawtooth.whitney import partition_report

from conftest import record_acceptance


def random_cone_drift(seed):
    rng = np.random.default_rng(seed)
    targets = []
    for _ in range(int(rng.integers(1, 4))):
        k = int(rng.integers(2, 6))
        targets.append(DyadicCube(2, k, int(rng.integers(0, 2 ** (k + 2)))))
    return cone_singular(targets, float(rng.uniform(0.05, 0.5)))


def test_grid_axioms():
    t = time.perf_counter()
    rep = verify_grid_properties(build_grid(2, 8))
    dt = time.perf_counter() - t
    ok = rep.passed and rep.a0 >= 0.2 and abs(rep.gamma - 1) <= 0.05 and rep.C_star <= 4 and dt < 10
    assert record_acceptance("grid axioms (dim 2, k_max 8)", ok,
                             f"a0={rep.a0:.3f} gamma={rep.gamma:.4f} C*={rep.C_star:.3f} t={dt:.2f}s")


def test_whitney_partition():
    t = time.perf_counter()
    pr = partition_report(build_grid(2, 8))
    dt = time.perf_counter() - t
    ok = (pr["overlapping_pairs"] == 0 and pr["volume_error"] <= 1e-10
          and pr["refined_inconsistencies"] == 0 and dt < 10)
    assert record_acceptance("Whitney partition (k_max 8)", ok,
                             f"overlaps={pr['overlapping_pairs']} vol_err={pr['volume_error']:.1e} t={dt:.2f}s")


def test_constants_table():
    op = C.OperatorSpec(zero_drift(), 0.1, 0.1, k_max=8)
    tab = C.constants_table(op)
    # oracle: plugged arithmetic with exact rationals
    eps, M = Fraction(1, 10), Fraction(1)
    l0 = math.ceil(M / eps)
    c = M / (eps * l0)
    ok = tab.n0 == 200 and tab.l0 == 10 and tab.c == 1
    ok &= all(tab.tau[k] == c * eps / M / 2**k and tab.l0 * tab.tau[k] == Fraction(1, 2**k) for k in tab.tau)
    ok &= tab.tau[3] == Fraction(1, 80)
    assert record_acceptance("constants table", ok, f"N0={tab.n0} l0={tab.l0} c={tab.c} tau3={tab.tau[3]}")


def test_stopping_time_equivalence():
    t = time.perf_counter()
    grid = build_grid(2, 6)
    mismatches, nonempty = 0, 0
    for seed in range(10):
        spec = random_cone_drift(seed)
        fams = brute_force_families(grid, spec, 0.1)
        got = [extract_family_first(grid, spec, 0.1)]
        while not got[-1].empty:
            got.append(extract_family_next(got[-1], grid, spec, 0.1))
        got_sets = [set(f.cubes) for f in got if not f.empty]
        want_sets = [set(f) for f in fams.values()]
        mismatches += got_sets != want_sets
        nonempty += bool(want_sets)
    dt = time.perf_counter() - t
    assert record_acceptance("stopping-time oracle equivalence (10 cone drifts)", mismatches == 0 and dt < 120,
                             f"mismatches={mismatches} nonempty={nonempty} t={dt:.1f}s")


def test_ampleness():
    worst_err, ok = 0.0, True
    builds = 0
    for seed in range(10):
        spec = random_cone_drift(seed)
        for eta in (0.1, 0.05):
            try:
                dom = build_ample_sawtooth(spec, 0.1, eta, k_max=6)
            except Exception:  # construction errors are not successful builds
                continue
            builds += 1
            if dom.n_stop == 0:
                continue
            exact = dom.families[-1].shadow_fraction_exact()
            worst_err = max(worst_err, abs(float(exact) - float(Fraction(dom.shadow_fractions[-1]))))
            ok &= exact <= Fraction(str(eta)) and dom.n_stop <= dom.n0
    ok &= worst_err <= 1e-12 and builds > 0
    assert record_acceptance("ampleness", ok, f"builds={builds} max_err={worst_err:.1e}")


def test_zero_drift_measure_oracle():
    t = time.perf_counter()
    cfg = WalkerConfig(rho=0.1, dabs=1e-4, seed=0)
    part = DyadicPartition(2, 3)
    est = estimate_measure((0.5, 0.0), UnitBall(2), zero_drift(), part, 10**5, cfg)
    dt = time.perf_counter() - t
    oracle = np.array([poisson_measure_closed((0.5, 0.0), a) for a in part.arcs()])
    se = np.sqrt(oracle * (1 - oracle) / est.completed)
    z = np.abs(est.mass - oracle) / se
    ok = (z <= 3).all() and (z <= 2).sum() >= 28 and est.escaped_fraction < 1e-3 and dt < 120
    assert record_acceptance("zero-drift measure oracle", ok,
                             f"max|z|={z.max():.2f} within2={int((z <= 2).sum())}/32 "
                             f"escaped={est.escaped_fraction:.1e} t={dt:.1f}s")


def test_markov_identity():
    t = time.perf_counter()
    om, lam, F = nested_disk_config(R=0.8, arc=(0.0, math.pi / 4))
    x = (0.3, 0.2)
    a = markov_identity_check(x, om, lam, F, zero_drift(), n_outer=10**5, n_inner=10**4)
    oracle = nested_disk_oracle(x, 0.8, (0.0, math.pi / 4))
    om2, lam2, F2, _, _ = one_notch_config()
    b = markov_identity_check((0.3, 0.1), om2, lam2, F2, uniform_small(0.01), n_outer=10**5, n_inner=10**4)
    dt = time.perf_counter() - t
    ok = a.within and b.within and dt < 600
    assert record_acceptance("Markov identity", ok,
                             f"nested |d|={a.residual:.4f}/3se={3 * a.combined_stderr:.4f} "
                             f"(oracle {oracle:.4f}); notch |d|={b.residual:.4f}/3se={3 * b.combined_stderr:.4f} "
                             f"t={dt:.0f}s")


def test_mc_vs_fd():
    t = time.perf_counter()
    spec = uniform_small(0.05)
    part = DyadicPartition(2, 3)
    est = estimate_measure((0.5, 0.0), UnitBall(2), spec, part, 10**5, WalkerConfig(seed=1))
    fd, h = fd_arc_measures(spec, (0.5, 0.0), part.arcs(), h=0.01)
    dt = time.perf_counter() - t
    gap = np.abs(est.mass - fd) - (3 * est.stderr + 2 * h)
    ok = (gap <= 0).all() and dt < 600
    z = np.abs(est.mass - fd) / np.maximum(est.stderr, 1e-12)
    assert record_acceptance("MC vs FD (eps_hat 0.05)", ok,
                             f"max|z|={z.max():.2f} h={h:.3f} worst slack={-gap.max():.4f} t={dt:.0f}s")


def test_bourgain_property():
    # floor from the Poisson oracle: Delta(x_hat, 10 r) at depth r has omega -> (2/pi) atan(10) ~ 0.94
    floor = 0.5
    poisson_min = min(poisson_measure_closed(((1 - 2.0**-k), 0.0), (-2 * math.asin(5 * 2.0**-k),
                                                                     2 * math.asin(5 * 2.0**-k)))
                      for k in range(3, 7))
    cfg = WalkerConfig(seed=2)
    a = C.bourgain_sweep(UnitBall(2), zero_drift(), n_walkers=20_000, cfg=cfg, floor=floor)
    b = C.bourgain_sweep(UnitBall(2), uniform_small(0.01), n_walkers=20_000, cfg=cfg, floor=floor)
    ca, cb = a.constants["bourgain_constant"], b.constants["bourgain_constant"]
    ok = ca > floor and cb > floor and poisson_min > floor
    assert record_acceptance("Bourgain property", ok,
                             f"zero={ca:.4f} eps_hat 0.01={cb:.4f} poisson_min={poisson_min:.4f} floor={floor}")


def test_holder_decay():
    rep = C.holder_exponent_fit(q_angle=0.0, r=0.5, spec=zero_drift(), h=0.01)
    lo, hi = rep.constants["alpha_ci95"]
    ok = lo > 0 and rep.constants["poisson_consistent"]
    assert record_acceptance("boundary Holder decay", ok,
                             f"alpha={rep.constants['alpha']:.4f} CI=[{lo:.3f},{hi:.3f}] "
                             f"band={rep.constants['residual_band']:.3f}")


def test_criterion_scan():
    rep = C.criterion_scan(UnitBall(2), zero_drift(), thetas=(0.1,), n_walkers=20_000, cfg=WalkerConfig(seed=3))
    c0 = rep.constants["c0[theta=0.1]"]
    # independent oracle: greedy adversary over Poisson cell masses, recomputed here
    worst = math.inf
    for k in range(2, 7):
        x = (1 - 2.0**-k, 0.0)
        lo, hi = C._delta_x_arc(x)
        e = np.linspace(lo, hi, 41)
        m = np.sort([poisson_measure_closed(x, (p, q)) for p, q in zip(e[:-1], e[1:])])
        worst = min(worst, float(m[:-4].sum()))
    rel = abs(c0 - worst) / worst
    ok = c0 > 0 and rel <= 0.2 and rep.verdict == C.SUPPORTED
    assert record_acceptance("criterion scan (theta 0.1)", ok, f"c0={c0:.4f} poisson={worst:.4f} rel={rel:.3f}")


def test_bmo_functional():
    rep = C.bmo_report(zero_drift(), np.cos, hs=(0.04, 0.02), oracle_grad_sq_one=True)
    errs = {}
    for r in rep.rows:
        errs[r["h"]] = max(errs.get(r["h"], 0.0), r["rel_error"])
    ok = all(e <= 0.05 for e in errs.values())
    assert record_acceptance("BMO functional (cos theta)", ok,
                             " ".join(f"h={h:.3f}:max_rel={e:.1e}" for h, e in sorted(errs.items())))


def test_determinism(tmp_path):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli_main(["build-sawtooth", "--drift", "cone:0.5:4,18", "--kmax", "6", "--out", str(out)]) == 0
        code = cli_main(["verify-claims", "--drift", "cone:0.5:4,18", "--walkers", "500", "--seed", "7",
                         "--out", str(out)])
        assert code in (0, 4)
        outs.append(out / "claims")
    files = sorted(p.name for p in outs[0].iterdir() if p.suffix in (".tsv", ".svg"))
    same = [filecmp.cmp(outs[0] / f, outs[1] / f, shallow=False) for f in files]
    ok = len(files) >= 6 and all(same)
    assert record_acceptance("determinism (verify-claims)", ok, f"{sum(same)}/{len(files)} files identical")
