import math

import numpy as np
import pytest
from hypothesis import given, strategies as hst

from ample_sawtooth.dyadic import (DyadicCube, build_grid, cube_coords, n_cubes, patch_areas, patch_point,
                                   read_grid, verify_grid_properties, write_grid)
from ample_sawtooth.errors import GridRangeError


def gnomonic_solid_angle(x1, x2, y1, y2):
    """Solid angle of a rectangle on the tangent plane at unit distance (independent oracle)."""
    f = lambda x, y: math.atan(x * y / math.sqrt(1 + x * x + y * y))
    return f(x2, y2) - f(x1, y2) - f(x2, y1) + f(x1, y1)


def test_counts():
    assert [n_cubes(2, k) for k in (1, 2, 3, 4)] == [8, 16, 32, 64]
    assert [n_cubes(3, k) for k in (1, 2, 3)] == [6, 24, 96]


def test_out_of_range_cube():
    with pytest.raises(GridRangeError):
        DyadicCube(2, 2, 16)
    with pytest.raises(GridRangeError):
        DyadicCube(2, 0, 0)


@given(hst.integers(1, 10), hst.data())
def test_parent_child_roundtrip_2d(k, data):
    j = data.draw(hst.integers(0, n_cubes(2, k) - 1))
    Q = DyadicCube(2, k, j)
    kids = Q.children()
    assert all(c.parent() == Q for c in kids)
    lo, hi = Q.extent
    assert kids[0].extent[0] == lo and kids[-1].extent[1] == hi
    assert sum(c.surface_measure for c in kids) == pytest.approx(Q.surface_measure, abs=1e-15)


@given(hst.integers(1, 5), hst.data())
def test_parent_child_roundtrip_3d(k, data):
    j = data.draw(hst.integers(0, n_cubes(3, k) - 1))
    Q = DyadicCube(3, k, j)
    kids = Q.children()
    assert len(kids) == 4 and all(c.parent() == Q and Q.contains(c) for c in kids)


@given(hst.floats(-1, 1), hst.floats(-1, 1), hst.floats(-1, 1))
def test_cube_coords_roundtrip(x, y, z):
    p = np.array([x, y, z])
    if np.linalg.norm(p) < 1e-3:
        return
    face, a, b = cube_coords(p)
    q = patch_point(face, a, b)
    assert np.allclose(q, p / np.linalg.norm(p), atol=1e-12)


def test_patch_area_matches_solid_angle():
    # oracle uses the tangent-plane coordinates tan(alpha), tan(beta)
    for (alo, ahi, blo, bhi) in [(-math.pi / 4, 0, 0, math.pi / 4), (0.1, 0.3, -0.2, 0.05)]:
        want = gnomonic_solid_angle(math.tan(alo), math.tan(ahi), math.tan(blo), math.tan(bhi))
        assert patch_areas(alo, ahi, blo, bhi)[0] == pytest.approx(want, rel=1e-9)


@pytest.mark.parametrize("dim,total", [(2, 2 * math.pi), (3, 4 * math.pi)])
def test_total_measure(dim, total):
    g = build_grid(dim, 3)
    for k in (1, 2, 3):
        assert sum(g.measures(k)) == pytest.approx(total, rel=1e-9)


@given(hst.floats(0, 2 * math.pi, exclude_max=True), hst.integers(1, 8))
def test_cube_at_contains_direction(t, k):
    g = build_grid(2, 8)
    p = np.array([math.cos(t), math.sin(t)])
    Q = g.cube_at(p, k)
    assert Q.contains_direction(p) or abs((t % (2 * math.pi)) - Q.extent[1]) < 1e-12


def test_properties_3d_pass():
    rep = verify_grid_properties(build_grid(3, 2))
    assert rep.passed, rep.lines()


def test_grid_roundtrip(tmp_path):
    g = build_grid(2, 4)
    n = write_grid(g, tmp_path / "g.tsv")
    assert n == 8 + 16 + 32 + 64
    h = read_grid(tmp_path / "g.tsv")
    assert h.dim == 2 and h.k_max == 4
    assert np.allclose(h.measures(4), g.measures(4))
