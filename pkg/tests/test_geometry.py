import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as hst

from ample_sawtooth.errors import DomainMembershipError, GeometryError
from ample_sawtooth.geometry import (Ball, RemovedBoxDomain, SurfaceBall, TruncatedSector, UnitBall,
                                     boundary_face_code, corkscrew_point, delta_x_ball, dist_to_boundary,
                                     touching_point)

points_in_disk = hst.tuples(hst.floats(0, 0.999), hst.floats(0, 2 * math.pi)).map(
    lambda p: np.array([p[0] * math.cos(p[1]), p[0] * math.sin(p[1])]))


@given(points_in_disk)
def test_disk_distance_and_touching(x):
    r = np.linalg.norm(x)
    assume(r > 1e-9)
    assert dist_to_boundary(x, UnitBall(2)) == pytest.approx(1 - r, abs=1e-12)
    assert np.allclose(touching_point(x, UnitBall(2)), x / r, atol=1e-12)


def test_origin_tie_break():
    assert np.allclose(touching_point((0.0, 0.0), UnitBall(2)), [1.0, 0.0])


def test_outside_rejected():
    with pytest.raises(DomainMembershipError):
        dist_to_boundary((1.2, 0.0), UnitBall(2))


def test_offcentre_ball():
    b = Ball(np.array([0.5, 0.0]), 0.25)
    assert dist_to_boundary((0.6, 0.0), b) == pytest.approx(0.15)


def test_removed_box_distance_top_face():
    d = RemovedBoxDomain([[0.0, 0.5, 0.75, 1.0]])
    x = np.array([0.6, 0.1])
    assert not d.contains((0.8, 0.1))
    r = np.linalg.norm(x)
    assert dist_to_boundary(x, d) == pytest.approx(0.75 - r, abs=1e-12)
    assert boundary_face_code(x, d) == 0


@given(points_in_disk)
def test_removed_box_distance_never_exceeds_disk(x):
    d = RemovedBoxDomain([[0.0, 0.5, 0.75, 1.0], [2.0, 2.4, 0.875, 1.0]])
    assume(d.contains(x))
    assert dist_to_boundary(x, d) <= 1 - np.linalg.norm(x) + 1e-12


def test_sector_membership():
    s = TruncatedSector(0.0, 1.0, 0.5)
    assert s.contains((0.7, 0.1)) and not s.contains((0.3, 0.1))


def test_delta_x_clamps():
    assert delta_x_ball((0.5, 0.0), UnitBall(2)).clamped
    sb = delta_x_ball((0.95, 0.0), UnitBall(2))
    assert not sb.clamped and sb.radius == pytest.approx(0.5)


def test_corkscrew_ball_and_failure():
    A = corkscrew_point(SurfaceBall(np.array([1.0, 0.0]), 0.2), UnitBall(2), 0.25)
    assert np.allclose(A, [0.9, 0.0])
    with pytest.raises(GeometryError) as err:
        corkscrew_point(SurfaceBall(np.array([1.0, 0.0]), 0.2), UnitBall(2), 0.9)
    assert err.value.achievable == pytest.approx(0.5)


def test_corkscrew_sawtooth_search():
    d = RemovedBoxDomain([[0.0, 0.5, 0.75, 1.0]])
    sb = SurfaceBall(np.array([1.0, 0.0]), 0.2)
    A = corkscrew_point(sb, d, 0.2)
    assert d.contains(A) and np.linalg.norm(A - sb.center) < sb.radius
    assert dist_to_boundary(A, d) >= 0.2 * 0.2 - 1e-12
