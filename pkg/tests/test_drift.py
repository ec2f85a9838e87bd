import math

import numpy as np
import pytest
from hypothesis import given, strategies as hst
from scipy import integrate

from ample_sawtooth.drift import (CarlesonLattice, asa_integral, asa_test, carleson_norm, cone_singular,
                                  custom_drift, fit_pointwise_constant, grid_field_from_arrays,
                                  load_grid_field, pointwise_bound_check, sample_grid_field, sup_local,
                                  uniform_box_integral, uniform_small, write_grid_field, zero_drift)
from ample_sawtooth.dyadic import DyadicCube, build_grid
from ample_sawtooth.errors import DriftBoundError, UnsupportedError
from ample_sawtooth.whitney import refine, slab, whitney_box

radii = hst.floats(0.01, 0.999)
angles = hst.floats(0, 2 * math.pi)


def pt(r, t):
    return np.array([[r * math.cos(t), r * math.sin(t)]])


@given(radii, angles, hst.floats(0.001, 0.9))
def test_uniform_field_saturates_smallness(r, t, e):
    spec = uniform_small(e)
    mag = spec.magnitude(pt(r, t))[0]
    assert mag * (1 - r) == pytest.approx(e, rel=1e-12)
    b = spec.evaluate(pt(r, t))[0]
    assert np.dot(b, pt(r, t)[0]) < 0  # points toward the origin


@given(radii, angles, hst.floats(0.0, 3.0))
def test_scaling_is_linear(r, t, s):
    spec = uniform_small(0.1)
    assert spec.scaled(s).magnitude(pt(r, t))[0] == pytest.approx(s * spec.magnitude(pt(r, t))[0], rel=1e-12)


def test_hostile_field_rejected():
    with pytest.raises(DriftBoundError) as err:
        uniform_small(5.0)
    assert err.value.witness is not None


def test_zero_field():
    spec = zero_drift()
    assert np.all(spec.magnitude(np.random.default_rng(0).uniform(-0.7, 0.7, (50, 2))) == 0)
    assert carleson_norm(spec, build_grid(2, 3)).value == 0.0


def test_cone_support(cone_target):
    spec = cone_singular([cone_target], 0.5)
    lo, hi = cone_target.extent
    rlo, rhi = slab(cone_target.k)
    r = 0.5 * (rlo + rhi)
    inside = pt(r, 0.5 * (lo + hi))
    assert spec.magnitude(inside)[0] * (1 - r) == pytest.approx(0.5)
    assert spec.magnitude(pt(r, hi + 0.3))[0] == 0
    assert spec.magnitude(pt(0.5 * (1 + rhi), 0.5 * (lo + hi)))[0] == 0
    assert pointwise_bound_check(spec).passed


def test_sup_local_uniform_value():
    # sup of eps^2/delta over the ball of radius delta/2 is attained at depth delta/2
    e = 0.05
    v = sup_local(np.array([0.9, 0.0]), uniform_small(e))
    assert v == pytest.approx(2 * e * e / 0.1, rel=1e-9)


def test_asa_integral_matches_quadrature():
    e = 0.05
    P = refine(whitney_box(DyadicCube(2, 3, 5)))[2]
    lo, hi, rlo, rhi = P.extent
    # independent oracle: integrate 2 e^2/delta over the polar box in (r, theta)
    want, _ = integrate.dblquad(lambda r, t: 2 * e * e / (1 - r) * r, lo, hi, rlo, rhi, epsrel=1e-12)
    q = asa_integral(P, uniform_small(e))
    assert q.value == pytest.approx(want, rel=1e-3)
    assert uniform_box_integral(P.extent, e) == pytest.approx(want, rel=1e-10)


def test_asa_threshold_monotone():
    P = refine(whitney_box(DyadicCube(2, 2, 1)))[0]
    assert asa_test(P, uniform_small(0.001), 0.1).good
    assert not asa_test(P, uniform_small(0.9), 0.1).good
    v = asa_test(P, zero_drift(), 0.1)
    assert v.good and v.integral_value == 0.0


def test_fit_pointwise_constant_uniform():
    spec = uniform_small(0.01)
    verdicts = [asa_test(P, spec, 0.5) for P in refine(whitney_box(DyadicCube(2, 2, 0)))]
    fit = fit_pointwise_constant(verdicts, spec, 0.5)
    assert fit.n_boxes == 4 and 0 < fit.c1 < 1


def test_grid_field_roundtrip(tmp_path):
    src = uniform_small(0.05)
    g = sample_grid_field(src, np.linspace(0.05, 0.95, 10), 16)
    write_grid_field(g, tmp_path / "f.txt")
    h = load_grid_field(tmp_path / "f.txt")
    x = pt(0.65, 2 * math.pi * 3 / 16)
    assert np.allclose(h.evaluate(x), g.evaluate(x))


def test_grid_field_validation():
    with pytest.raises(ValueError):
        grid_field_from_arrays([0.5, 0.4], [0.0], np.zeros((2, 1)), np.zeros((2, 1)))


def test_custom_field_not_packable():
    spec = custom_drift(lambda xs: np.zeros_like(xs))
    assert not spec.packable
    with pytest.raises(UnsupportedError):
        spec.pack()


def test_carleson_norm_uniform_grows_with_truncation():
    # the uniform-small field is not Carleson: the norm grows like log(1/delta_cut)
    spec = uniform_small(0.05)
    grid = build_grid(2, 3)
    a = carleson_norm(spec, grid, CarlesonLattice(center_generation=2, radius_generations=(1, 2),
                                                  delta_cut=2.0**-6)).value
    b = carleson_norm(spec, grid, CarlesonLattice(center_generation=2, radius_generations=(1, 2),
                                                  delta_cut=2.0**-12)).value
    assert b > 1.5 * a
