import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as hst
from scipy import integrate

from ample_sawtooth import checks as C
from ample_sawtooth.drift import uniform_small, zero_drift
from ample_sawtooth.dyadic import DyadicCube
from ample_sawtooth.errors import GeometryError, PreconditionError
from ample_sawtooth.geometry import UnitBall
from ample_sawtooth.measure import WalkerConfig, fd_solve
from ample_sawtooth.sawtooth import build_ample_sawtooth
from ample_sawtooth.whitney import WhitneyBox, slab

TWO_PI = 2 * math.pi


@pytest.mark.parametrize("v,se,floor,want", [
    (0.9, 0.1, 0.5, C.SUPPORTED),
    (0.7, 0.1, 0.5, C.INCONCLUSIVE),
    (0.1, 0.1, 0.5, C.VIOLATED),
    (0.0, 0.0, None, C.INCONCLUSIVE),
    (0.01, 0.001, None, C.SUPPORTED),
])
def test_verdict_rule(v, se, floor, want):
    assert C.lower_bound_verdict(v, se, floor) == want


def test_positivity_is_never_violated():
    assert C.lower_bound_verdict(-5.0, 0.01) == C.INCONCLUSIVE


@pytest.mark.parametrize("M,eps,l0,c", [(1, 0.1, 10, 1), (1, 0.3, 4, Fraction(5, 6)), (2.5, 0.1, 25, 1)])
def test_constants_examples(M, eps, l0, c):
    op = C.OperatorSpec(zero_drift(2, M), eps, 0.1, k_max=4)
    tab = C.constants_table(op)
    assert tab.l0 == l0 and tab.c == c
    for k, t in tab.tau.items():
        assert t == c * Fraction(str(eps)) / Fraction(str(M)) / 2**k
        assert tab.l0 * t <= Fraction(1, 2**k)  # tau_k never exceeds the cube side over l0
    assert "N0=" in tab.to_tsv()


def test_constants_3d_n0():
    from ample_sawtooth.drift import zero_drift as z
    tab = C.constants_table(C.OperatorSpec(z(3, 1.0), 0.1, 0.1))
    assert tab.n == 2 and tab.n0 == 400


def test_claim_report_files(tmp_path):
    rep = C.ClaimReport("demo", {"a": 1}, {"x": 0.5}, C.SUPPORTED, ["i", "v"], [{"i": 0, "v": 0.25}], ["hello"])
    tsv, txt = rep.write(tmp_path)
    assert tsv.read_text().splitlines()[1:] == ["i\tv", "0\t0.25"]
    assert "verdict: supported" in txt.read_text() and "note: hello" in txt.read_text()


def test_bourgain_precondition():
    with pytest.raises(PreconditionError):
        C.bourgain_check((0.9, 0.0), UnitBall(2), uniform_small(0.5), n_walkers=100, eps=0.1)


def test_bourgain_small_run():
    rep = C.bourgain_check((0.875, 0.0), UnitBall(2), zero_drift(), n_walkers=2000,
                           cfg=WalkerConfig(rho=0.2, seed=1), floor=0.5)
    assert rep.verdict == C.SUPPORTED


poles = hst.tuples(hst.floats(0.05, 0.995), hst.floats(0, TWO_PI, exclude_max=True))


@given(hst.tuples(hst.floats(0.5, 0.995), hst.floats(0, TWO_PI, exclude_max=True)))
def test_twin_points_trivial_sawtooth(p):
    dom = build_ample_sawtooth(zero_drift(), 0.1, 0.1, k_max=4)
    x = p[0] * np.array([math.cos(p[1]), math.sin(p[1])])
    tb = C.twin_balls(x, dom, a=0.01)
    assert tb.case == 2
    assert tb.separation == pytest.approx(5 * 0.01 * tb.r_x, rel=1e-9)
    assert np.linalg.norm(tb.x1) == pytest.approx(np.linalg.norm(x))
    assert tb.r_x == pytest.approx(1 - p[0], abs=1e-12)


def test_twin_points_need_room_near_origin():
    dom = build_ample_sawtooth(zero_drift(), 0.1, 0.1, k_max=4)
    with pytest.raises(GeometryError):
        C.twin_balls((0.02, 0.0), dom, a=0.01)


def _neighbour_pole(dom):
    (Q,) = dom.families[0].cubes
    lo, _ = Q.extent
    k = Q.generation + 1
    left = DyadicCube(2, k, Q.children()[0].index - 1)
    r = 0.5 * sum(slab(k))
    t = 0.5 * sum(left.extent)
    return r * np.array([math.cos(t), math.sin(t)]), left


def test_case_one_on_shared_face(cone_sawtooth):
    x, cube = _neighbour_pole(cone_sawtooth)
    faces = C.shared_faces(WhitneyBox(cube), cone_sawtooth.final())
    assert faces and faces[0][0] == "lateral"
    tb = C.twin_balls(x, cone_sawtooth)
    assert tb.case == 1 and tb.face == "lateral"
    assert tb.separation == pytest.approx(7 * tb.ball_radius)
    # both centres sit on the removed box's lateral face
    phi = faces[0][1][0]
    for y in (tb.x1, tb.x2):
        assert math.atan2(y[1], y[0]) % TWO_PI == pytest.approx(phi)


@given(poles)
def test_cases_are_exclusive(cone_sawtooth, p):
    x = p[0] * np.array([math.cos(p[1]), math.sin(p[1])])
    omega = cone_sawtooth.final()
    if not omega.contains(x):
        return
    shared = C.shared_faces(WhitneyBox(C._whitney_cube_of(x)), omega)
    try:
        tb = C.twin_balls(x, cone_sawtooth)
    except GeometryError:
        return
    assert (tb.case == 1) == bool(shared)


def test_holder_zero_data_is_trivial():
    rep = C.holder_exponent_fit(spec=zero_drift(), data=lambda t: np.zeros_like(t), h=0.04)
    assert rep.verdict == C.SUPPORTED


def test_holder_precondition():
    with pytest.raises(PreconditionError):
        C.holder_exponent_fit(q_angle=0.0, r=0.5, data=lambda t: np.ones_like(t), h=0.04)


@given(hst.lists(hst.floats(0, 1), min_size=2, max_size=30), hst.floats(0, 0.5), hst.floats(0, 0.5))
def test_greedy_adversary_monotone(masses, t1, t2):
    lo, hi = sorted((t1, t2))
    a, kept = C.greedy_adversary(masses, lo)
    b, _ = C.greedy_adversary(masses, hi)
    assert b <= a + 1e-12
    assert a == pytest.approx(sum(m for m, k in zip(masses, kept) if k))
    assert C.greedy_adversary(masses, 0.0)[0] == pytest.approx(sum(masses))


@given(hst.lists(hst.tuples(hst.floats(0.01, 1), hst.floats(0, 1)), min_size=1, max_size=20))
def test_envelope_dominates_and_grows(pairs):
    xs, ys = zip(*pairs)
    env = C.envelope(xs, ys, (0.1, 0.5, 1.0))
    for t, c in env.items():
        assert all(y <= c * x**t + 1e-12 for x, y in pairs)
    # with x <= 1 a larger exponent needs a larger constant
    assert env[0.1] <= env[0.5] + 1e-12 <= env[1.0] + 2e-12


def test_carleson_region_integral_against_dblquad():
    for r in (0.5, 0.25, 0.125):
        # independent route: polar coordinates centred at the boundary point (1, 0)
        want, _ = integrate.dblquad(
            lambda psi, s: (1 - math.sqrt(1 + 2 * s * math.cos(psi) + s * s)) * s,
            0, r, lambda s: math.acos(-s / 2), lambda s: TWO_PI - math.acos(-s / 2), epsrel=1e-10)
        assert C.carleson_region_integral_disk(r) == pytest.approx(want, rel=1e-7)


def test_bmo_constant_data():
    sol = fd_solve(zero_drift(), lambda t: np.full_like(t, 3.0), h=0.04)
    res = C.bmo_carleson_functional(sol, lambda t: np.full_like(t, 3.0), n_centers=4, radius_generations=(1, 2))
    assert res.ratio == 0.0 and res.bmo_norm == 0.0 and res.flagged


def test_dyadic_bmo_of_cos():
    # mean oscillation of cos over the whole circle is 2/pi and dominates the finer arcs
    assert C.dyadic_bmo_norm(np.cos, generations=3) == pytest.approx(2 / math.pi, rel=1e-3)


def test_criterion_rejects_nontrivial_sawtooth(cone_sawtooth, cone_spec):
    from ample_sawtooth.errors import UnsupportedError
    with pytest.raises(UnsupportedError):
        C.criterion_scan(cone_sawtooth, cone_spec, n_walkers=100)
