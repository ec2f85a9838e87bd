"""Primitive geometry of the unit ball and of its sawtooth subdomains.

Points are plain numpy arrays of length 2 or 3.  Domains are small handle
objects that can test membership, measure distance to their boundary and
pack themselves into the flat arrays consumed by the compiled kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import DomainMembershipError, GeometryError, UnsupportedError

TWO_PI = 2.0 * math.pi
_EMPTY_BOXES = np.zeros((0, 4))


def as_point(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size not in (2, 3) or not np.all(np.isfinite(x)):
        raise ValueError(f"points must be finite vectors of length 2 or 3, got {x!r}")
    return x


def polar(x):
    """(r, theta) with theta in [0, 2 pi)."""
    return math.hypot(x[0], x[1]), math.atan2(x[1], x[0]) % TWO_PI


def from_polar(r, theta):
    return np.array([r * math.cos(theta), r * math.sin(theta)])


def sphere_surface_ball_measure(radius, dim):
    """sigma(B(q, radius) cap S) for q on the unit sphere."""
    r = min(radius, 2.0)
    if dim == 2:
        return 4.0 * math.asin(r / 2.0)
    return math.pi * r * r


class DomainHandle:
    """Common interface: membership, boundary distance, kernel packing."""

    dim = 2
    kind = "abstract"
    boundary_diameter = 2.0

    def pack(self):
        raise NotImplementedError

    def contains(self, x) -> bool:
        x = as_point(x)
        inside, _, _, _ = self._locate(x)
        return bool(inside)

    def _locate(self, x):
        kind, params, boxes = self.pack()
        near = np.empty(x.size)
        inside, d, code = K.locate(x, kind, params, boxes, near)
        return inside, d, code, near

    def locate_many(self, xs):
        kind, params, boxes = self.pack()
        return K.locate_many(np.ascontiguousarray(xs, dtype=float), kind, params, boxes)


class Ball(DomainHandle):
    kind = "ball"

    def __init__(self, center, radius):
        self.center = as_point(center)
        self.radius = float(radius)
        self.dim = self.center.size
        self.boundary_diameter = 2.0 * self.radius
        self._packed = (K.DOM_BALL, np.append(self.center, self.radius), _EMPTY_BOXES)

    def pack(self):
        return self._packed

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"


class UnitBall(Ball):
    kind = "unit-ball"

    def __init__(self, dim=2):
        super().__init__(np.zeros(dim), 1.0)

    def __repr__(self):
        return f"UnitBall(dim={self.dim})"


class TruncatedSector(DomainHandle):
    """{r_in < |x| < r_out, theta_lo < arg x < theta_hi} in the plane."""

    kind = "truncated-sector"

    def __init__(self, theta_lo, theta_hi, r_in, r_out=1.0):
        if not (0 <= r_in < r_out <= 1.0 and 0 < theta_hi - theta_lo < TWO_PI):
            raise ValueError("invalid sector")
        self.theta_lo, self.theta_hi = float(theta_lo), float(theta_hi)
        self.r_in, self.r_out = float(r_in), float(r_out)
        self.boundary_diameter = 2.0 * self.r_out
        self._packed = (K.DOM_SECTOR, np.array([self.theta_lo, self.theta_hi, self.r_in, self.r_out]),
                        _EMPTY_BOXES)

    def pack(self):
        return self._packed


class RemovedBoxDomain(DomainHandle):
    """Unit disk minus a union of closed polar boxes [lo, hi] x [r_lo, 1].

    ``boxes`` is an (m, 4) array of (theta_lo, theta_hi, r_lo, r_hi).  In 3-D
    the boxes are (face, alpha_lo, alpha_hi, beta_lo, beta_hi, r_lo, r_hi)
    rows and only membership is available.
    """

    kind = "sawtooth"

    def __init__(self, boxes, dim=2, label=""):
        self.dim = dim
        self.label = label
        width = 4 if dim == 2 else 7
        self.boxes = np.ascontiguousarray(np.asarray(boxes, dtype=float).reshape(-1, width))
        self._packed = (K.DOM_SAWTOOTH, np.zeros(1), self.boxes)

    def pack(self):
        if self.dim != 2:
            raise UnsupportedError("boundary distance for 3-D sawtooth domains is not available")
        return self._packed

    def contains(self, x) -> bool:
        x = as_point(x)
        if self.dim == 2:
            return super().contains(x)
        r = float(np.linalg.norm(x))
        if r >= 1.0:
            return False
        if r == 0.0:
            return True
        face, a, b = K.cube_face_coords(x)
        for row in self.boxes:
            if (face == int(row[0]) and row[1] <= a <= row[2] and row[3] <= b <= row[4]
                    and row[5] <= r <= row[6]):
                return False
        return True

    def contains_many(self, xs):
        xs = np.asarray(xs, dtype=float)
        if self.dim == 2:
            return self.locate_many(xs)[0]
        return np.array([self.contains(x) for x in xs])

    def __repr__(self):
        return f"RemovedBoxDomain({self.label or len(self.boxes)} boxes)"


@dataclass(frozen=True)
class SurfaceBall:
    """Delta(center, radius) = B(center, radius) intersected with the boundary."""

    center: np.ndarray
    radius: float
    clamped: bool = False

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("surface ball radius must be positive")

    def contains(self, y) -> bool:
        return self.clamped or float(np.linalg.norm(np.asarray(y) - self.center)) < self.radius

    def half_angle(self):
        """Angular half-width on the unit circle (radius measured as a chord)."""
        return math.pi if self.clamped else 2.0 * math.asin(min(self.radius, 2.0) / 2.0)

    def sphere_measure(self, dim=None):
        dim = dim or self.center.size
        if self.clamped:
            return TWO_PI if dim == 2 else 4.0 * math.pi
        return sphere_surface_ball_measure(self.radius, dim)


def _require_inside(x, dom):
    inside, d, code, near = dom._locate(x)
    if not inside:
        raise DomainMembershipError(f"point {x.tolist()} is not inside {dom!r}")
    return d, code, near


def dist_to_boundary(x, dom: DomainHandle) -> float:
    x = as_point(x)
    d, _, _ = _require_inside(x, dom)
    return float(d)


def touching_point(x, dom: DomainHandle) -> np.ndarray:
    """Nearest boundary point; ties go to the first candidate (sphere first).

    At the centre of a ball every boundary point is equidistant and the
    result is center + radius * e_1.
    """
    x = as_point(x)
    _, _, near = _require_inside(x, dom)
    return near.copy()


def boundary_face_code(x, dom: DomainHandle) -> int:
    x = as_point(x)
    _, code, _ = _require_inside(x, dom)
    return int(code)


def _corkscrew_score(A, sb, dom):
    inside, d, _, _ = dom._locate(A)
    if not inside:
        return -1.0
    return min(d, sb.radius - float(np.linalg.norm(A - sb.center)))


def corkscrew_point(sb: SurfaceBall, dom: DomainHandle, c: float) -> np.ndarray:
    """A point A with B(A, c r) inside dom and inside B(center, r).

    For balls the inward normal point at depth r/2 is returned; other domains
    use a deterministic search over a polar lattice around the centre.  When
    no lattice point achieves ``c`` a GeometryError reports the best
    achievable constant.
    """
    if not 0 < c < 1:
        raise ValueError("corkscrew constant must lie in (0, 1)")
    r = sb.radius
    q = np.asarray(sb.center, dtype=float)
    if isinstance(dom, Ball):
        n = q - dom.center
        n = n / np.linalg.norm(n)
        A = q - 0.5 * r * n
        best = _corkscrew_score(A, sb, dom) / r
        if best >= c - 1e-12:
            return A
        raise GeometryError(f"corkscrew constant {c} not achievable; best is {best:.4g}", achievable=best)
    if dom.dim != 2:
        raise UnsupportedError("corkscrew search is implemented for planar domains")
    best, best_A = -math.inf, None
    for frac in np.linspace(0.05, 0.95, 19):
        for phi in np.linspace(0.0, TWO_PI, 144, endpoint=False):
            A = q + frac * r * np.array([math.cos(phi), math.sin(phi)])
            s = _corkscrew_score(A, sb, dom)
            if s > best + 1e-15:
                best, best_A = s, A
    best /= r
    if best >= c - 1e-12:
        return best_A
    raise GeometryError(f"corkscrew constant {c} not achievable; best is {best:.4g}", achievable=best)


def delta_x_ball(x, dom: DomainHandle) -> SurfaceBall:
    """Delta_x = Delta(x_hat, 10 delta(x)), clamped to the whole boundary."""
    x = as_point(x)
    d, _, near = _require_inside(x, dom)
    if d >= dom.boundary_diameter:
        raise GeometryError("delta(x) must be smaller than the boundary diameter")
    radius = 10.0 * d
    if radius >= dom.boundary_diameter:
        return SurfaceBall(near.copy(), dom.boundary_diameter, clamped=True)
    return SurfaceBall(near.copy(), radius)


def ball_containment_fraction(A, radius, dom, outer: SurfaceBall, n=1000, seed=0):
    """Rejection-sampling check that B(A, radius) lies in dom and B(outer).

    Returns the fraction of uniformly sampled points of B(A, radius) that
    satisfy both memberships (1.0 means no violation was found).
    """
    rng = np.random.default_rng(seed)
    d = len(A)
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = radius * rng.random(n) ** (1.0 / d)
    pts = np.asarray(A) + g * rad[:, None]
    inside = dom.locate_many(pts)[0]
    in_outer = np.linalg.norm(pts - outer.center, axis=1) < outer.radius
    return float(np.mean(inside & in_outer))
