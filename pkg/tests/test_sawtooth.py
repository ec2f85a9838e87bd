from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from ample_sawtooth.drift import cone_singular, zero_drift
from ample_sawtooth.dyadic import DyadicCube, build_grid
from ample_sawtooth.errors import ConstructionError
from ample_sawtooth.sawtooth import (brute_force_families, build_ample_sawtooth, extract_family_first,
                                     extract_family_next, from_families, membership, n0_bound,
                                     read_sawtooth, write_sawtooth)
from ample_sawtooth.whitney import slab


def test_n0_bound_examples():
    assert n0_bound(1, 0.1, 0.1, 1) == 200
    assert n0_bound(1, 0.1, 0.1, 2) == 400
    assert n0_bound(0.3, 0.1, 0.5, 1) == 12  # exact rationals avoid 11.999... rounding


def test_zero_drift_has_no_generations():
    dom = build_ample_sawtooth(zero_drift(), 0.1, 0.1, k_max=5)
    assert dom.n_stop == 0 and dom.final().contains((0.99, 0.0))


def test_cone_build(cone_sawtooth, cone_target):
    dom = cone_sawtooth
    assert dom.n_stop == 1 and dom.shadow_fractions == [1 / 32]
    (Q,) = dom.families[0].cubes
    assert Q.generation == 3 and Q.contains(cone_target)
    assert dom.families[0].shadow_fraction_exact() == Fraction(1, 32)


def test_tighter_eta_needs_another_generation(cone_spec):
    dom = build_ample_sawtooth(cone_spec, 0.1, 0.02, k_max=6)
    assert dom.n_stop == 2 and dom.shadow_fractions[-1] <= 0.02


def test_exhausted_families_raise(cone_spec):
    with pytest.raises(ConstructionError):
        build_ample_sawtooth(cone_spec, 0.1, 0.01, k_max=6)


def test_eta_range(cone_spec):
    with pytest.raises(ValueError):
        build_ample_sawtooth(cone_spec, 0.1, 1.0)


@settings(max_examples=6)
@given(hst.integers(2, 5), hst.integers(0, 10**6), hst.floats(0.1, 0.6))
def test_extraction_matches_brute_force(k, j, amp):
    grid = build_grid(2, 5)
    spec = cone_singular([DyadicCube(2, k, j % 2 ** (k + 2))], amp)
    want = [set(f) for f in brute_force_families(grid, spec, 0.1).values()]
    got = [extract_family_first(grid, spec, 0.1)]
    while not got[-1].empty:
        got.append(extract_family_next(got[-1], grid, spec, 0.1))
    assert [set(f.cubes) for f in got if not f.empty] == want


def test_membership_levels(cone_sawtooth):
    dom = cone_sawtooth
    (Q,) = dom.families[0].cubes
    lo, hi = Q.extent
    t = 0.5 * (lo + hi)
    r_in_T = 0.5 * (slab(Q.generation)[0] + 1)
    r_below = 0.5 * sum(slab(Q.generation - 1))
    x = r_in_T * np.array([np.cos(t), np.sin(t)])
    assert not membership(x, dom) and membership(x, dom, "omega:0")
    assert membership(r_below * np.array([np.cos(t), np.sin(t)]), dom)
    # Lambda removes only the boundary-adjacent S part, so the Whitney slab of Q stays in Lambda_1
    r_slab = 0.5 * sum(slab(Q.generation))
    y = r_slab * np.array([np.cos(t), np.sin(t)])
    assert membership(y, dom, "lambda:1") and not membership(y, dom, "omega:1")
    with pytest.raises(ValueError):
        dom.level("omega:5")


def test_roundtrip(tmp_path, cone_sawtooth):
    write_sawtooth(cone_sawtooth, tmp_path / "s.tsv")
    back = read_sawtooth(tmp_path / "s.tsv")
    assert back.n_stop == cone_sawtooth.n_stop and back.n0 == 200
    assert [set(f.cubes) for f in back.families] == [set(f.cubes) for f in cone_sawtooth.families]
    assert back.summary() == cone_sawtooth.summary()


def test_from_families():
    dom = from_families(2, [[DyadicCube(2, 2, 0), DyadicCube(2, 3, 5)]])
    assert dom.shadow_fractions == [pytest.approx(1 / 16 + 1 / 32)]
    assert dom.families[0].per_root_fraction()
