import math

import numpy as np
import pytest
from hypothesis import given, strategies as hst

from ample_sawtooth.drift import uniform_small, zero_drift
from ample_sawtooth.geometry import RemovedBoxDomain, UnitBall
from ample_sawtooth.measure import (ArcPartition, DyadicPartition, MeasureEstimate, SawtoothPartition,
                                    WalkerConfig, boundary_cell_fractions, estimate_measure, fd_assemble,
                                    fd_solve, graded_radii, markov_identity_check, nested_disk_config,
                                    nested_disk_oracle, poisson_measure, poisson_measure_closed, sample_exits)

TWO_PI = 2 * math.pi


@given(hst.floats(0, 0.95), hst.floats(0, TWO_PI), hst.floats(0, TWO_PI), hst.floats(0.01, 6.0))
def test_poisson_routes_agree(r, t, lo, width):
    x = (r * math.cos(t), r * math.sin(t))
    arc = (lo, lo + width)
    assert poisson_measure(x, arc) == pytest.approx(poisson_measure_closed(x, arc), abs=1e-10)


@given(hst.floats(0, TWO_PI), hst.floats(0.0, TWO_PI))
def test_mean_value_at_origin(lo, width):
    # harmonic measure from the centre is normalised arc length
    assert poisson_measure_closed((0.0, 0.0), (lo, lo + width)) == pytest.approx(width / TWO_PI, abs=1e-12)


def test_poisson_rejects_other_domains():
    with pytest.raises(Exception):
        poisson_measure((0.1, 0.0), (0, 1), RemovedBoxDomain([[0, 1, 0.75, 1]]))


def test_walkers_deterministic_and_thread_invariant():
    cfg = WalkerConfig(rho=0.2, dabs=1e-3, seed=11, batch=128)
    a = sample_exits((0.3, 0.1), UnitBall(2), uniform_small(0.05), 500, cfg)
    b = sample_exits((0.3, 0.1), UnitBall(2), uniform_small(0.05), 500, cfg)
    c = sample_exits((0.3, 0.1), UnitBall(2), uniform_small(0.05), 500,
                     WalkerConfig(rho=0.2, dabs=1e-3, seed=11, batch=128, threads=3))
    assert np.array_equal(a.points, b.points) and np.array_equal(a.points, c.points)
    assert a.n == 500 and np.all(np.linalg.norm(a.points, axis=1) > 1 - 1e-3 - 1e-12)


def test_walker_config_validation():
    with pytest.raises(ValueError):
        WalkerConfig(rho=0.9)
    with pytest.raises(ValueError):
        WalkerConfig(dabs=0)


def test_small_mc_matches_poisson():
    part = DyadicPartition(2, 1)
    est = estimate_measure((0.4, -0.2), UnitBall(2), zero_drift(), part, 8000, WalkerConfig(rho=0.2, seed=5))
    want = np.array([poisson_measure_closed((0.4, -0.2), a) for a in part.arcs()])
    assert np.all(np.abs(est.mass - want) <= 4 * np.sqrt(want * (1 - want) / est.completed))
    assert est.mass.sum() == pytest.approx(1.0)


def test_sawtooth_partition_catches_box_faces():
    dom = RemovedBoxDomain([[0.0, math.pi / 4, 0.75, 1.0]])
    part = SawtoothPartition(dom, 3)
    est = estimate_measure((0.6, 0.3), dom, zero_drift(), part, 2000, WalkerConfig(rho=0.2, seed=3))
    box_mass = sum(m for lab, m in zip(part.labels, est.mass) if lab.startswith("box0"))
    assert box_mass > 0.1 and est.mass.sum() == pytest.approx(1.0)


def test_estimate_tsv_roundtrip(tmp_path):
    part = ArcPartition(np.linspace(0, TWO_PI, 5))
    est = estimate_measure((0.0, 0.0), UnitBall(2), zero_drift(), part, 300, WalkerConfig(rho=0.3, seed=1))
    est.to_tsv(tmp_path / "m.tsv")
    back = MeasureEstimate.from_tsv(tmp_path / "m.tsv")
    assert np.array_equal(back.counts, est.counts) and back.labels == est.labels
    assert np.allclose(back.mass, est.mass)


def test_fd_harmonic_linear_function():
    sol = fd_solve(zero_drift(), np.cos, h=0.02)
    for x in [(0.3, 0.2), (0.7, -0.5), (0.0, 0.9)]:
        assert sol.value_at(x) == pytest.approx(x[0], abs=5e-3)
    assert abs(sol.u_origin) < 1e-6


def test_fd_constant_data_and_maximum_principle():
    sol = fd_solve(uniform_small(0.05), lambda t: np.full_like(t, 2.0), h=0.04)
    assert np.allclose(sol.u, 2.0) and sol.u_origin == pytest.approx(2.0)


def test_cell_fractions_partition_unity():
    op = fd_assemble(zero_drift(), h=0.05)
    arcs = DyadicPartition(2, 2).arcs()
    total = sum(boundary_cell_fractions(op.thetas, a) for a in arcs)
    assert np.allclose(total, 1.0)


def test_graded_radii_shape():
    r = graded_radii(0.05, extra=(0.987,))
    assert r[-1] == 1.0 and 0.987 in r and np.all(np.diff(r) > 0)
    with pytest.raises(ValueError):
        graded_radii(0.3)


def test_markov_identity_small_budget():
    om, lam, F = nested_disk_config(R=0.8, arc=(0.0, math.pi / 2))
    x = (0.2, 0.1)
    rep = markov_identity_check(x, om, lam, F, zero_drift(), n_outer=3000, n_inner=1500, n_lhs=3000,
                                cfg=WalkerConfig(rho=0.2, seed=4))
    oracle = nested_disk_oracle(x, 0.8, (0.0, math.pi / 2))
    assert oracle == pytest.approx(poisson_measure_closed(x, (0.0, math.pi / 2)), abs=1e-6)
    assert rep.within
    assert abs(rep.lhs - oracle) <= 4 * rep.lhs_stderr
