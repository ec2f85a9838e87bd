import math

import numpy as np
import pytest
from hypothesis import given, strategies as hst

from ample_sawtooth.dyadic import DyadicCube, build_grid, n_cubes
from ample_sawtooth.whitney import (carleson_box, generation_of_radius, partition_report, slab, whitney_box,
                                    whitney_box_at)


def test_slab_intervals():
    assert slab(1) == (0.5, 0.75)
    assert slab(3) == (0.875, 0.9375)


def test_volume_closed_form_2d():
    U = whitney_box(DyadicCube(2, 2, 3))
    # half the angle times the difference of squared radii
    assert U.volume == pytest.approx(0.5 * (math.pi / 8) * (0.875**2 - 0.75**2), rel=1e-14)
    assert U.side_length == 0.25 and U.radial_width == 0.125


def test_volume_closed_form_3d():
    Q = DyadicCube(3, 1, 0)  # a whole cube face: solid angle 4 pi / 6
    U = whitney_box(Q)
    assert U.volume == pytest.approx(4 * math.pi / 6 * (0.75**3 - 0.5**3) / 3, rel=1e-9)
    assert sum(P.volume for P in U.refine()) == pytest.approx(U.volume, rel=1e-12)


def test_carleson_parts():
    cb = carleson_box(DyadicCube(2, 2, 0))
    assert cb.T_interval == (0.75, 1.0) and cb.S_interval == (0.875, 1.0)
    assert cb.volume("T") == pytest.approx(cb.volume("S") + whitney_box(DyadicCube(2, 2, 0)).volume)


def test_faces_roles():
    roles = [f.role for f in whitney_box(DyadicCube(2, 3, 1)).faces()]
    assert roles == ["top", "bottom", "lateral", "lateral"]
    assert len(whitney_box(DyadicCube(3, 2, 7)).faces()) == 6


@given(hst.floats(0.5, 1.0, exclude_min=True, exclude_max=True))
def test_generation_of_radius_in_slab(r):
    k = generation_of_radius(r)
    if k is None:
        return
    lo, hi = slab(k)
    assert lo < r <= hi


def test_generation_of_radius_edges():
    assert generation_of_radius(0.5) is None
    assert generation_of_radius(0.75) == 1
    assert generation_of_radius(0.75 + 1e-9) == 2


@given(hst.floats(0.51, 0.99), hst.floats(0, 2 * math.pi, exclude_max=True))
def test_box_at_contains_point(r, t):
    grid = build_grid(2, 8)
    x = np.array([r * math.cos(t), r * math.sin(t)])
    U = whitney_box_at(x, grid)
    if U is not None:
        assert U.contains(x)
        assert sum(P.contains(x) for P in U.refine()) >= 1


def test_refined_children_tile_parent():
    U = whitney_box(DyadicCube(2, 4, 9))
    kids = U.refine()
    assert len(kids) == 4
    assert sum(P.volume for P in kids) == pytest.approx(U.volume, rel=1e-14)
    assert {P.side_length for P in kids} == {U.side_length / 2}


def test_partition_report_small():
    pr = partition_report(build_grid(2, 5))
    assert pr["overlapping_pairs"] == 0 and pr["refined_inconsistencies"] == 0
    assert pr["boxes"] == sum(n_cubes(2, k) for k in range(1, 6))
    assert pr["volume_error"] < 1e-12
