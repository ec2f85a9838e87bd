"""Singular drift fields on the unit ball and the smallness tests applied to them.

Built-in families evaluate inside compiled kernels; a ``custom`` family wraps
an arbitrary python callable and is used for adversarial tests only (it cannot
drive the random walker).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import _kernels as K
from .dyadic import DyadicCube, DyadicGrid, patch_point
from .errors import DriftBoundError, QuadratureError, UnsupportedError
from .whitney import RefinedBox, slab

TWO_PI = 2.0 * math.pi
FAMILIES = ("zero", "uniform-small", "cone-singular", "grid-sampled", "custom")
_NO_BOXES = np.zeros((0, 4))
_NO_GRID = (np.zeros(1), np.zeros(1), np.zeros((1, 1)), np.zeros((1, 1)))


def _cone_rows(targets):
    if not targets:
        return _NO_BOXES
    rows = []
    for Q in targets:
        lo, hi = slab(Q.generation)
        rows.append(tuple(Q.extent) + (lo, hi))
    return np.ascontiguousarray(np.array(rows, dtype=float))


@dataclass(frozen=True)
class DriftFieldSpec:
    """A drift field B with its declared pointwise constant M.

    ``param`` is the family strength (eps_hat for uniform-small, the amplitude
    A for cone-singular) and ``scale`` a global multiplier.  Construction
    rejects fields that violate |B| <= M / delta on 10^4 sampled points.
    """

    family: str
    declared_M: float
    dim: int = 2
    param: float = 0.0
    scale: float = 1.0
    targets: tuple = ()
    grid: Optional[tuple] = None
    evaluator: Optional[Callable] = field(default=None, compare=False)
    label: str = ""
    validate: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown drift family {self.family!r}")
        if not self.declared_M > 0:
            raise ValueError("declared M must be positive")
        if self.dim not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if self.family == "grid-sampled" and self.dim != 2:
            raise UnsupportedError("grid-sampled drifts are planar")
        if self.validate:
            res = pointwise_bound_check(self)
            if not res.passed:
                raise DriftBoundError(
                    f"|B| exceeds M/delta at {res.witness.tolist()} (ratio {res.worst_ratio:.4g})",
                    witness=res.witness)

    @property
    def packable(self):
        return self.family != "custom"

    def pack(self):
        if self.family == "custom":
            raise UnsupportedError("custom drift fields cannot be evaluated in compiled kernels")
        kind = {"zero": K.DRIFT_ZERO, "uniform-small": K.DRIFT_UNIFORM,
                "cone-singular": K.DRIFT_CONE, "grid-sampled": K.DRIFT_GRID}[self.family]
        dscal = np.array([self.scale, self.param])
        boxes = _cone_rows(self.targets) if self.family == "cone-singular" else _NO_BOXES
        grid = self.grid if self.family == "grid-sampled" else _NO_GRID
        return (kind, dscal, boxes) + tuple(grid)

    def evaluate(self, xs):
        """Drift vectors at an (n, dim) array of points."""
        xs = np.ascontiguousarray(np.atleast_2d(np.asarray(xs, dtype=float)))
        if self.family == "custom":
            return self.scale * np.asarray(self.evaluator(xs), dtype=float).reshape(xs.shape)
        return K.drift_many(xs, *self.pack())

    def magnitude(self, xs):
        return np.linalg.norm(self.evaluate(xs), axis=1)

    def scaled(self, s):
        return replace(self, scale=self.scale * s)

    def describe(self):
        d = {"family": self.family, "M": self.declared_M, "dim": self.dim, "scale": self.scale}
        if self.family == "uniform-small":
            d["eps_hat"] = self.param
        if self.family == "cone-singular":
            d["amplitude"] = self.param
            d["targets"] = [[Q.generation, Q.index] for Q in self.targets]
        if self.label:
            d["label"] = self.label
        return d


def zero_drift(dim=2, M=1.0):
    return DriftFieldSpec("zero", M, dim)


def uniform_small(eps_hat, dim=2, M=1.0):
    """B(x) = -(eps_hat / delta(x)) x/|x|: inward radial, |B| delta = eps_hat."""
    if eps_hat < 0:
        raise ValueError("eps_hat must be nonnegative")
    return DriftFieldSpec("uniform-small", M, dim, param=float(eps_hat))


def cone_singular(targets, amplitude, M=1.0):
    """|B| = A / delta on the Whitney slabs U_Q of the target cubes, zero elsewhere."""
    targets = tuple(targets)
    if not targets:
        raise ValueError("cone-singular drift needs at least one target cube")
    dims = {Q.dim for Q in targets}
    if len(dims) != 1:
        raise ValueError("target cubes must share a dimension")
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    return DriftFieldSpec("cone-singular", M, dims.pop(), param=float(amplitude), targets=targets)


def custom_drift(evaluator, M=1.0, dim=2, label="custom", validate=True):
    return DriftFieldSpec("custom", M, dim, evaluator=evaluator, label=label, validate=validate)


# ------------------------------------------------------------ grid-sampled I/O


def grid_field_from_arrays(radii, thetas, vx, vy, M=1.0):
    """Nearest-node field on a polar lattice; thetas must be equally spaced."""
    gr = np.ascontiguousarray(np.asarray(radii, dtype=float))
    gth = np.ascontiguousarray(np.asarray(thetas, dtype=float))
    vx = np.ascontiguousarray(np.asarray(vx, dtype=float))
    vy = np.ascontiguousarray(np.asarray(vy, dtype=float))
    if np.any(np.diff(gr) <= 0):
        raise ValueError("lattice radii must be strictly increasing")
    if gth.size > 1 and not np.allclose(np.diff(gth), TWO_PI / gth.size, rtol=1e-9, atol=1e-12):
        raise ValueError("lattice angles must be equally spaced over a full turn")
    if vx.shape != (gr.size, gth.size) or vy.shape != vx.shape:
        raise ValueError("vector components must have shape (n_r, n_theta)")
    return DriftFieldSpec("grid-sampled", M, 2, grid=(gr, gth, vx, vy))


def load_grid_field(path, M=1.0):
    """Read ``r theta b_x b_y`` records (one lattice node per line, '#' comments)."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 4:
        raise ValueError(f"{path}: expected 4 columns (r theta b_x b_y)")
    radii = np.unique(data[:, 0])
    thetas = np.unique(np.round(data[:, 1] % TWO_PI, 12))
    if radii.size * thetas.size != data.shape[0]:
        raise ValueError(f"{path}: nodes do not form a full polar lattice")
    ir = np.searchsorted(radii, data[:, 0])
    it = np.searchsorted(thetas, np.round(data[:, 1] % TWO_PI, 12))
    vx = np.zeros((radii.size, thetas.size))
    vy = np.zeros_like(vx)
    vx[ir, it] = data[:, 2]
    vy[ir, it] = data[:, 3]
    return grid_field_from_arrays(radii, thetas, vx, vy, M)


def write_grid_field(spec: DriftFieldSpec, path):
    gr, gth, vx, vy = spec.grid
    R, T = np.meshgrid(gr, gth, indexing="ij")
    rows = np.column_stack([R.ravel(), T.ravel(), vx.ravel(), vy.ravel()])
    np.savetxt(path, rows, fmt="%.17g", header="r theta b_x b_y")


def sample_grid_field(spec: DriftFieldSpec, radii, n_theta):
    """Tabulate any planar field on a polar lattice (for export or resampling)."""
    thetas = np.arange(n_theta) * TWO_PI / n_theta
    R, T = np.meshgrid(radii, thetas, indexing="ij")
    pts = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
    v = spec.evaluate(pts)
    return grid_field_from_arrays(radii, thetas, v[:, 0].reshape(R.shape),
                                  v[:, 1].reshape(R.shape), spec.declared_M)


# -------------------------------------------------------------- pointwise bound


@dataclass(frozen=True)
class BoundCheck:
    passed: bool
    worst_ratio: float
    witness: Optional[np.ndarray]
    n_samples: int


def _bound_samples(dim, n, seed):
    """Half uniform in the ball, half with log-uniform boundary distance."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    h = n // 2
    r = np.empty(n)
    r[:h] = rng.random(h) ** (1.0 / dim)
    r[h:] = 1.0 - 10.0 ** rng.uniform(-6.0, 0.0, n - h)
    r = np.clip(r, 0.0, 1.0 - 1e-12)
    return g * r[:, None]


def pointwise_bound_check(spec: DriftFieldSpec, n=10_000, seed=0, extra_points=None) -> BoundCheck:
    """Rejection-sample |B(x)| delta(x) <= M; report the worst point."""
    pts = _bound_samples(spec.dim, n, seed)
    if spec.family == "cone-singular":
        # make sure every target slab is probed
        cen = []
        for Q in spec.targets:
            lo, hi = slab(Q.generation)
            for s in (0.01, 0.5, 0.99):
                cen.append(Q.center * (lo + s * (hi - lo)))
        pts = np.vstack([pts, np.array(cen)])
    if extra_points is not None:
        pts = np.vstack([pts, np.asarray(extra_points, dtype=float).reshape(-1, spec.dim)])
    delta = 1.0 - np.linalg.norm(pts, axis=1)
    mag = spec.magnitude(pts)
    ratio = mag * delta / spec.declared_M
    i = int(np.argmax(ratio))
    worst = float(ratio[i])
    ok = worst <= 1.0 + 1e-12
    return BoundCheck(ok, worst, None if ok else pts[i].copy(), pts.shape[0])


# ------------------------------------------------------------------- sup_local


def _lattice_offsets(dim, m_s):
    nodes = np.linspace(-1.0, 1.0, m_s + 1)
    grids = np.meshgrid(*([nodes] * dim), indexing="ij")
    off = np.column_stack([g.ravel() for g in grids])
    return off[np.sum(off**2, axis=1) <= 1.0 + 1e-12]


def _frames(ts):
    n, d = ts.shape
    r = np.linalg.norm(ts, axis=1)
    F = np.zeros((n, d, d))
    F[:] = np.eye(d)
    ok = r > 0
    e0 = ts[ok] / r[ok, None]
    F[ok, 0] = e0
    if d == 2:
        F[ok, 1] = np.column_stack([-e0[:, 1], e0[:, 0]])
        return F
    k = np.argmin(np.abs(e0), axis=1)
    e = np.eye(3)[k]
    e1 = e - np.sum(e * e0, axis=1)[:, None] * e0
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    F[ok, 1] = e1
    F[ok, 2] = np.cross(e0, e1)
    return F


def _sup_python(ts, spec, m_s):
    off = _lattice_offsets(ts.shape[1], m_s)
    F = _frames(ts)
    rad = 0.5 * (1.0 - np.linalg.norm(ts, axis=1))
    out = np.zeros(ts.shape[0])
    for k in range(ts.shape[0]):
        ys = ts[k] + rad[k] * off @ F[k]
        ry = np.linalg.norm(ys, axis=1)
        keep = ry < 1.0
        if not np.any(keep):
            continue
        val = spec.magnitude(ys[keep]) ** 2 * (1.0 - ry[keep])
        out[k] = float(val.max())
    return out


def sup_local_many(ts, spec: DriftFieldSpec, m_s=8):
    """Lattice max of |B|^2(y) delta(y) over B(t, delta(t)/2), one value per t."""
    ts = np.ascontiguousarray(np.atleast_2d(np.asarray(ts, dtype=float)))
    if m_s < 1:
        raise ValueError("m_s must be positive")
    if spec.family == "custom":
        return _sup_python(ts, spec, m_s)
    return K.sup_local_many(ts, m_s, *spec.pack())


def sup_local(t, spec: DriftFieldSpec, m_s=8, stabilize=False, rtol=0.05, m_max=64):
    """sup of |B|^2 delta over the half-distance ball at t.

    With ``stabilize`` the lattice is doubled until two successive maxima agree
    to ``rtol`` (doubling nests the lattices, so the value never decreases).
    """
    t = np.asarray(t, dtype=float)
    if float(np.linalg.norm(t)) >= 1.0:
        raise ValueError("sup_local needs an interior point")
    v = float(sup_local_many(t[None], spec, m_s)[0])
    if not stabilize:
        return v
    while m_s < m_max:
        m_s *= 2
        w = float(sup_local_many(t[None], spec, m_s)[0])
        if abs(w - v) <= rtol * max(w, 1e-300):
            return w
        v = w
    return v


# ------------------------------------------------------------------ box quadrature


def _sphere_jacobian(a, b):
    ta, tb = np.tan(a), np.tan(b)
    return (1 + ta**2) * (1 + tb**2) / (1 + ta**2 + tb**2) ** 1.5


def box_nodes(extent, dim, m):
    """Midpoint nodes and polar volume weights of an m^dim tensor rule on a box."""
    u = (np.arange(m) + 0.5) / m
    if dim == 2:
        lo, hi, rlo, rhi = extent
        th = lo + (hi - lo) * u
        r = rlo + (rhi - rlo) * u
        T, R = np.meshgrid(th, r, indexing="ij")
        pts = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
        w = (R * (hi - lo) * (rhi - rlo) / m**2).ravel()
        return pts, w
    face, alo, ahi, blo, bhi, rlo, rhi = extent
    a = alo + (ahi - alo) * u
    b = blo + (bhi - blo) * u
    r = rlo + (rhi - rlo) * u
    A, Bb, R = np.meshgrid(a, b, r, indexing="ij")
    dirs = patch_point(int(face), A, Bb)
    pts = (dirs * R[..., None]).reshape(-1, 3)
    w = (R**2 * _sphere_jacobian(A, Bb)).ravel() * (ahi - alo) * (bhi - blo) * (rhi - rlo) / m**3
    return pts, w


def _arcs_overlap(a0, a1, b0, b1):
    """Do the closed circular arcs [a0, a1] and [b0, b1] (mod 2 pi) meet?"""
    if a1 - a0 >= TWO_PI or b1 - b0 >= TWO_PI:
        return True
    s = (b0 - a0) % TWO_PI
    return s <= a1 - a0 or (a0 - b0) % TWO_PI <= b1 - b0


def support_may_touch(spec: DriftFieldSpec, extent) -> bool:
    """Conservative test: can B(t, delta(t)/2), t in the box, meet the field's support?

    Only cone fields in 2-D are pruned; everything else answers True.
    """
    if spec.family != "cone-singular" or spec.dim != 2:
        return True
    lo, hi, rlo, rhi = extent
    if rlo <= 0.4:
        return True
    pad = math.asin(min(1.0, (1.0 - rlo) / (2.0 * rlo))) + 1e-12
    r_in = rlo - 0.5 * (1.0 - rlo) - 1e-12
    r_out = rhi + 0.5 * (1.0 - rhi) + 1e-12
    for Q in spec.targets:
        slo, shi = slab(Q.generation)
        if shi < r_in or slo > r_out:
            continue
        qlo, qhi = Q.extent
        if _arcs_overlap(lo - pad, hi + pad, qlo, qhi):
            return True
    return False


@dataclass(frozen=True)
class AsaQuadrature:
    value: float
    error_bound: float
    m: int
    m_s: int
    converged: bool


def _box_integral(extent, dim, spec, m, m_s):
    pts, w = box_nodes(extent, dim, m)
    return float(np.dot(sup_local_many(pts, spec, m_s), w))


def asa_integral(P: RefinedBox, spec: DriftFieldSpec, m=8, m_s=8, target=None,
                 m_max=64, m_s_max=32, strict=False) -> AsaQuadrature:
    """Integral over P of the local sup functional, with a Richardson-style bound.

    The value is the 2m midpoint rule and the bound |I(2m) - I(m)|.  When a
    ``target`` tolerance is given, m is doubled (up to ``m_max``) until the
    bound falls below it; ``strict`` turns a miss into a QuadratureError.
    The sup lattice resolution is first stabilised to 5% on the coarse rule.
    """
    if spec.family == "zero" or not support_may_touch(spec, P.extent):
        return AsaQuadrature(0.0, 0.0, m, m_s, True)
    ext = P.extent
    dim = P.dim
    coarse = _box_integral(ext, dim, spec, m, m_s)
    while m_s < m_s_max:
        finer = _box_integral(ext, dim, spec, m, 2 * m_s)
        m_s *= 2
        if abs(finer - coarse) <= 0.05 * max(abs(finer), 1e-300):
            coarse = finer
            break
        coarse = finer
    while True:
        fine = _box_integral(ext, dim, spec, 2 * m, m_s)
        err = abs(fine - coarse)
        if target is None or err <= target or 2 * m >= m_max:
            break
        m *= 2
        coarse = fine
    converged = target is None or err <= target
    if strict and not converged:
        raise QuadratureError(f"box {P!r}: error bound {err:.3g} above target {target:.3g}")
    return AsaQuadrature(fine, err, 2 * m, m_s, converged)


@dataclass(frozen=True)
class AsaVerdict:
    box: RefinedBox
    integral_value: float
    threshold: float
    verdict: str
    quadrature_error_bound: float
    converged: bool = True

    @property
    def good(self):
        return self.verdict == "good"

    @property
    def inconclusive(self):
        """The quadrature could not separate the integral from the threshold."""
        return abs(self.integral_value - self.threshold) <= self.quadrature_error_bound


def asa_threshold(P: RefinedBox, eps):
    return eps * P.side_length ** (P.dim - 1)


def asa_test(P: RefinedBox, spec: DriftFieldSpec, eps, m=8, m_s=8, strict=False) -> AsaVerdict:
    """Good iff the integral plus its error bound stays strictly below eps l(P)^n.

    Equality, and any case the error bound cannot resolve, is reported bad.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    thr = asa_threshold(P, eps)
    q = asa_integral(P, spec, m=m, m_s=m_s, target=0.1 * thr, strict=strict)
    good = q.value + q.error_bound < thr
    return AsaVerdict(P, q.value, thr, "good" if good else "bad", q.error_bound, q.converged)


def uniform_box_integral(extent, eps_hat):
    """Closed form of the integral of 2 eps_hat^2 / delta over a planar polar box."""
    lo, hi, rlo, rhi = extent
    F = lambda r: -r - math.log(1.0 - r)  # antiderivative of r / (1 - r)
    return 2.0 * eps_hat**2 * (hi - lo) * (F(rhi) - F(rlo))


# ---------------------------------------------------------- pointwise smallness


@dataclass(frozen=True)
class SmallnessFit:
    c1: float
    per_box: np.ndarray
    n_boxes: int
    spread: float  # max / median of the per-box ratios


def fit_pointwise_constant(verdicts, spec: DriftFieldSpec, eps, n_samples=64):
    """Fit c1 in max_P |B| l(P) <= c1 eps over the good refined boxes."""
    vals = []
    for v in verdicts:
        if not v.good:
            continue
        pts, _ = box_nodes(v.box.extent, v.box.dim, max(2, int(round(n_samples ** (1 / v.box.dim)))))
        vals.append(float(spec.magnitude(pts).max()) * v.box.side_length / eps)
    vals = np.array(vals)
    if vals.size == 0:
        return SmallnessFit(0.0, vals, 0, 1.0)
    med = float(np.median(vals))
    spread = float(vals.max() / med) if med > 0 else (1.0 if vals.max() == 0 else math.inf)
    return SmallnessFit(float(vals.max()), vals, int(vals.size), spread)


# --------------------------------------------------------------- Carleson norm


@dataclass(frozen=True)
class CarlesonLattice:
    """Finite lattice of (boundary point, radius) pairs for the Carleson sup.

    Centres are the cube centres of generation ``center_generation``; radii are
    2^-k for k in ``radius_generations``; the integral is truncated at
    boundary distance ``delta_cut``.
    """

    center_generation: int = 5
    radius_generations: tuple = (1, 2, 3, 4, 5)
    delta_cut: float = 2.0**-10
    n_angle: int = 16
    n_radial: int = 6
    m_s: int = 8

    @classmethod
    def for_grid(cls, grid: DyadicGrid, **kw):
        cg = min(grid.k_max, 5 if grid.dim == 2 else 2)
        kw.setdefault("center_generation", cg)
        kw.setdefault("radius_generations", tuple(range(1, grid.k_max + 1)))
        kw.setdefault("delta_cut", 2.0 ** -(grid.k_max + 1))
        return cls(**kw)

    def describe(self):
        return {"center_generation": self.center_generation,
                "radius_generations": list(self.radius_generations),
                "delta_cut": self.delta_cut, "n_angle": self.n_angle,
                "n_radial": self.n_radial, "m_s": self.m_s}


def _radial_panels(lo, hi, n):
    """Gauss-Legendre nodes in delta on geometric panels [lo, hi]."""
    xg, wg = np.polynomial.legendre.leggauss(n)
    edges = [lo]
    while edges[-1] * 2 < hi:
        edges.append(edges[-1] * 2)
    edges.append(hi)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * xg + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * wg)
    return np.concatenate(nodes), np.concatenate(weights)


def _carleson_nodes(x, r, dim, lat):
    """Quadrature for integrals over B(x, r) intersected with the unit ball,
    truncated at distance ``delta_cut`` from the sphere (|x| = 1)."""
    lo = lat.delta_cut
    hi = min(r, 1.0)
    if hi <= lo:
        return np.zeros((0, dim)), np.zeros(0)
    dl, wl = _radial_panels(lo, hi, lat.n_radial)
    rho = 1.0 - dl
    cosphi = np.clip((1.0 + rho**2 - r * r) / (2.0 * rho), -1.0, 1.0)
    phi = np.arccos(cosphi)
    xg, wg = np.polynomial.legendre.leggauss(lat.n_angle)
    pts, ws = [], []
    if dim == 2:
        th0 = math.atan2(x[1], x[0])
        for p, w, ph in zip(rho, wl, phi):
            th = th0 + ph * xg
            pts.append(np.column_stack([p * np.cos(th), p * np.sin(th)]))
            ws.append(w * p * ph * wg)
        return np.vstack(pts), np.concatenate(ws)
    frame = _frames(np.asarray(x, dtype=float)[None])[0]
    az = (np.arange(lat.n_angle) + 0.5) * TWO_PI / lat.n_angle
    for p, w, ph in zip(rho, wl, phi):
        psi = 0.5 * ph * (xg + 1.0)
        wpsi = 0.5 * ph * wg
        Ps, Az = np.meshgrid(psi, az, indexing="ij")
        d = (np.cos(Ps)[..., None] * frame[0] + (np.sin(Ps) * np.cos(Az))[..., None] * frame[1]
             + (np.sin(Ps) * np.sin(Az))[..., None] * frame[2])
        pts.append(p * d.reshape(-1, 3))
        ws.append((w * p * p * np.sin(Ps) * wpsi[:, None] * (TWO_PI / lat.n_angle)).ravel())
    return np.vstack(pts), np.concatenate(ws)


def _surface_ball_measure(r, dim):
    r = min(r, 2.0)
    return 4.0 * math.asin(r / 2.0) if dim == 2 else math.pi * r * r


@dataclass(frozen=True)
class CarlesonNorm:
    value: float
    argmax_center: np.ndarray
    argmax_radius: float
    lattice: CarlesonLattice
    per_radius: dict


def carleson_norm(spec: DriftFieldSpec, grid: DyadicGrid, lattice: CarlesonLattice = None) -> CarlesonNorm:
    """Max over the lattice of sigma(Delta(x,r))^-1 times the truncated Carleson integral."""
    lat = lattice or CarlesonLattice.for_grid(grid)
    if spec.dim != grid.dim:
        raise ValueError("drift and grid dimensions differ")
    centers = np.array([c.center for c in grid.generation(lat.center_generation)])
    best, arg_c, arg_r = 0.0, centers[0], 2.0 ** -lat.radius_generations[0]
    per_radius = {}
    if spec.family == "zero":
        return CarlesonNorm(0.0, arg_c, arg_r, lat, {k: 0.0 for k in lat.radius_generations})
    for k in lat.radius_generations:
        r = 2.0**-k
        sig = _surface_ball_measure(r, grid.dim)
        top = 0.0
        for x in centers:
            pts, w = _carleson_nodes(x, r, grid.dim, lat)
            if w.size == 0:
                continue
            val = float(np.dot(sup_local_many(pts, spec, lat.m_s), w)) / sig
            if val > top:
                top = val
            if val > best:
                best, arg_c, arg_r = val, x, r
        per_radius[k] = top
    return CarlesonNorm(best, np.asarray(arg_c), arg_r, lat, per_radius)


def calibrate_cone_amplitude(targets, grid: DyadicGrid, M=1.0, lattice=None, norm=1.0):
    """Amplitude A making the cone field's Carleson norm equal ``norm``.

    The integrand scales as A^2, so one reference evaluation fixes A.
    """
    ref = cone_singular(targets, min(1.0, M), M)
    cn = carleson_norm(ref, grid, lattice).value
    if cn == 0:
        raise ValueError("reference cone field has zero Carleson norm on this lattice")
    A = ref.param * math.sqrt(norm / cn)
    if A > M:
        raise DriftBoundError(f"calibrated amplitude {A:.4g} exceeds M = {M}")
    return A
