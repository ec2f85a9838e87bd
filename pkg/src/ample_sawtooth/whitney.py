"""Whitney boxes U_Q, their refinement, Carleson boxes T_Q = S_Q + U_Q, faces.

U_Q for a generation-k cube Q is the product of Q with the radial slab
(1 - 2^-k, 1 - 2^-(k+1)], i.e. points at distance [2^-(k+1), 2^-k) from the
sphere.  T_Q is the whole radial stack Q x (1 - 2^-k, 1) and S_Q its
boundary-adjacent part Q x (1 - 2^-(k+1), 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dyadic import DyadicCube, DyadicGrid, cube_coords, n_cubes, patch_areas, patch_point

TWO_PI = 2.0 * math.pi


def _polar_volume(dim, ang_extent, rlo, rhi):
    if dim == 2:
        lo, hi = ang_extent
        return 0.5 * (hi - lo) * (rhi**2 - rlo**2)
    _, alo, ahi, blo, bhi = ang_extent
    return float(patch_areas(alo, ahi, blo, bhi)[0]) * (rhi**3 - rlo**3) / 3.0


def _in_polar_region(x, dim, ang_extent, rlo, rhi, closed=False):
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if closed:
        if not rlo <= r <= rhi:
            return False
    elif not rlo < r <= rhi:
        return False
    if dim == 2:
        lo, hi = ang_extent
        t = math.atan2(x[1], x[0]) % TWO_PI
        return lo <= t <= hi if closed else lo <= t < hi
    face, a, b = cube_coords(x)
    f, alo, ahi, blo, bhi = ang_extent
    if closed:
        return face == f and alo <= a <= ahi and blo <= b <= bhi
    return face == f and alo <= a < ahi and blo <= b < bhi


def slab(k):
    """Radial interval (lo, hi] of generation-k Whitney boxes."""
    return 1.0 - 2.0**-k, 1.0 - 2.0 ** -(k + 1)


@dataclass(frozen=True)
class Face:
    owner: object
    index: int
    role: str  # "top" | "bottom" | "lateral"
    geometry: tuple

    def sample(self, n=64):
        """Points spread over the face (2-D: along the arc or segment)."""
        kind = self.geometry[0]
        if kind == "arc":
            _, r, lo, hi = self.geometry
            t = np.linspace(lo, hi, n)
            return np.column_stack([r * np.cos(t), r * np.sin(t)])
        if kind == "segment":
            _, th, r0, r1 = self.geometry
            s = np.linspace(r0, r1, n)
            return np.column_stack([s * math.cos(th), s * math.sin(th)])
        if kind == "cap":
            _, r, face, alo, ahi, blo, bhi = self.geometry
            m = max(2, int(math.sqrt(n)))
            A, B = np.meshgrid(np.linspace(alo, ahi, m), np.linspace(blo, bhi, m), indexing="ij")
            return r * patch_point(face, A, B).reshape(-1, 3)
        _, face, coord, value, olo, ohi, r0, r1 = self.geometry
        m = max(2, int(math.sqrt(n)))
        O, R = np.meshgrid(np.linspace(olo, ohi, m), np.linspace(r0, r1, m), indexing="ij")
        if coord == "alpha":
            P = patch_point(face, np.full_like(O, value), O)
        else:
            P = patch_point(face, O, np.full_like(O, value))
        return (P * R[..., None]).reshape(-1, 3)


def _faces(owner, dim, ang_extent, rlo, rhi):
    if dim == 2:
        lo, hi = ang_extent
        return [Face(owner, 1, "top", ("arc", rlo, lo, hi)),
                Face(owner, 2, "bottom", ("arc", rhi, lo, hi)),
                Face(owner, 3, "lateral", ("segment", lo, rlo, rhi)),
                Face(owner, 4, "lateral", ("segment", hi, rlo, rhi))]
    face, alo, ahi, blo, bhi = ang_extent
    return [Face(owner, 1, "top", ("cap", rlo, face, alo, ahi, blo, bhi)),
            Face(owner, 2, "bottom", ("cap", rhi, face, alo, ahi, blo, bhi)),
            Face(owner, 3, "lateral", ("sheet", face, "alpha", alo, blo, bhi, rlo, rhi)),
            Face(owner, 4, "lateral", ("sheet", face, "alpha", ahi, blo, bhi, rlo, rhi)),
            Face(owner, 5, "lateral", ("sheet", face, "beta", blo, alo, ahi, rlo, rhi)),
            Face(owner, 6, "lateral", ("sheet", face, "beta", bhi, alo, ahi, rlo, rhi))]


@dataclass(frozen=True)
class WhitneyBox:
    cube: DyadicCube

    @property
    def generation(self):
        return self.cube.generation

    @property
    def radial_interval(self):
        return slab(self.cube.generation)

    @property
    def side_length(self):
        return 2.0 ** -self.cube.generation

    @property
    def radial_width(self):
        return 2.0 ** -(self.cube.generation + 1)

    @property
    def dim(self):
        return self.cube.dim

    @cached_property
    def volume(self):
        lo, hi = self.radial_interval
        return _polar_volume(self.dim, self.cube.extent, lo, hi)

    def polar_row(self):
        lo, hi = self.radial_interval
        return _row(self.cube, lo, hi)

    def contains(self, x):
        lo, hi = self.radial_interval
        return _in_polar_region(x, self.dim, self.cube.extent, lo, hi)

    def refine(self):
        return refine(self)

    def faces(self):
        return faces(self)

    def __repr__(self):
        return f"U[{self.cube!r}]"


def _row(cube, rlo, rhi):
    if cube.dim == 2:
        lo, hi = cube.extent
        return (lo, hi, rlo, rhi)
    return tuple(cube.extent) + (rlo, rhi)


@dataclass(frozen=True)
class RefinedBox:
    parent: WhitneyBox
    octant_index: int

    @cached_property
    def extent(self):
        """2-D: (theta_lo, theta_hi, r_lo, r_hi); 3-D: (face, alo, ahi, blo, bhi, r_lo, r_hi)."""
        lo_r, hi_r = self.parent.radial_interval
        mid_r = 0.5 * (lo_r + hi_r)
        o = self.octant_index
        rad = (lo_r, mid_r) if (o >> (self.dim - 1)) & 1 == 0 else (mid_r, hi_r)
        ext = self.parent.cube.extent
        if self.dim == 2:
            lo, hi = ext
            mid = 0.5 * (lo + hi)
            ang = (lo, mid) if o & 1 == 0 else (mid, hi)
            return ang + rad
        face, alo, ahi, blo, bhi = ext
        am, bm = 0.5 * (alo + ahi), 0.5 * (blo + bhi)
        a = (alo, am) if o & 1 == 0 else (am, ahi)
        b = (blo, bm) if (o >> 1) & 1 == 0 else (bm, bhi)
        return (face,) + a + b + rad

    @property
    def dim(self):
        return self.parent.dim

    @property
    def side_length(self):
        return 0.5 * self.parent.side_length

    @cached_property
    def volume(self):
        e = self.extent
        if self.dim == 2:
            return _polar_volume(2, e[:2], e[2], e[3])
        return _polar_volume(3, e[:5], e[5], e[6])

    def contains(self, x):
        e = self.extent
        if self.dim == 2:
            return _in_polar_region(x, 2, e[:2], e[2], e[3])
        return _in_polar_region(x, 3, e[:5], e[5], e[6])

    def __repr__(self):
        return f"P[{self.parent.cube!r}, {self.octant_index}]"


@dataclass(frozen=True)
class CarlesonBox:
    root_cube: DyadicCube

    @property
    def k(self):
        return self.root_cube.generation

    @property
    def T_interval(self):
        return 1.0 - 2.0**-self.k, 1.0

    @property
    def S_interval(self):
        return 1.0 - 2.0 ** -(self.k + 1), 1.0

    @property
    def U(self):
        return WhitneyBox(self.root_cube)

    def interval(self, part):
        return {"T": self.T_interval, "S": self.S_interval, "U": self.U.radial_interval}[part]

    def volume(self, part="T"):
        lo, hi = self.interval(part)
        return _polar_volume(self.root_cube.dim, self.root_cube.extent, lo, hi)

    def contains(self, x, part="T"):
        lo, hi = self.interval(part)
        if part == "U":
            return self.U.contains(x)
        x = np.asarray(x, dtype=float)
        r = float(np.linalg.norm(x))
        return lo < r < hi and _in_polar_region(x, self.root_cube.dim, self.root_cube.extent, lo, hi)

    def polar_row(self, part="T"):
        lo, hi = self.interval(part)
        return _row(self.root_cube, lo, hi)

    def faces(self, part="T"):
        lo, hi = self.interval(part)
        return _faces(self, self.root_cube.dim, self.root_cube.extent, lo, hi)

    def __repr__(self):
        return f"T[{self.root_cube!r}]"


def whitney_box(Q: DyadicCube) -> WhitneyBox:
    return WhitneyBox(Q)


def carleson_box(Q: DyadicCube) -> CarlesonBox:
    return CarlesonBox(Q)


def refine(U: WhitneyBox):
    return [RefinedBox(U, o) for o in range(2**U.dim)]


def faces(owner):
    if isinstance(owner, WhitneyBox):
        lo, hi = owner.radial_interval
        return _faces(owner, owner.dim, owner.cube.extent, lo, hi)
    return owner.faces("T")


def generation_of_radius(r):
    """Generation k with r in the slab (1 - 2^-k, 1 - 2^-(k+1)], or None."""
    delta = 1.0 - r
    if not 0.0 < delta < 0.5:
        return None
    k = math.ceil(-math.log2(delta)) - 1
    lo, hi = slab(k)
    # guard against rounding at dyadic endpoints
    if r <= lo:
        k -= 1
    elif r > hi:
        k += 1
    return k if k >= 1 else None


def whitney_box_at(x, grid: DyadicGrid):
    """The Whitney box containing x, or None when |x| <= 1/2 or too deep."""
    x = np.asarray(x, dtype=float)
    k = generation_of_radius(float(np.linalg.norm(x)))
    if k is None or k > grid.k_max:
        return None
    return WhitneyBox(grid.cube_at(x, k))


def whitney_boxes(grid: DyadicGrid, k=None):
    gens = range(1, grid.k_max + 1) if k is None else [k]
    for g in gens:
        for j in range(n_cubes(grid.dim, g)):
            yield WhitneyBox(DyadicCube(grid.dim, g, j))


def partition_report(grid: DyadicGrid):
    """Exhaustive disjointness and volume check of the 2-D Whitney boxes.

    Returns a dict with the number of overlapping pairs, the summed volume,
    the exact annulus volume it should match down to depth k_max, and the
    number of refined boxes whose volume or containment is inconsistent.
    """
    if grid.dim != 2:
        raise ValueError("partition_report is exhaustive only in 2-D")
    rows = []
    for k in range(1, grid.k_max + 1):
        lo, hi = grid.arcs(k)
        rlo, rhi = slab(k)
        rows.append(np.column_stack([lo, hi, np.full(lo.size, rlo), np.full(lo.size, rhi)]))
    R = np.vstack(rows)
    ang = np.minimum(R[:, None, 1], R[None, :, 1]) - np.maximum(R[:, None, 0], R[None, :, 0])
    rad = np.minimum(R[:, None, 3], R[None, :, 3]) - np.maximum(R[:, None, 2], R[None, :, 2])
    overlap = (ang > 1e-15) & (rad > 1e-15)
    np.fill_diagonal(overlap, False)
    n_overlap = int(overlap.sum() // 2)
    volume = float((0.5 * (R[:, 1] - R[:, 0]) * (R[:, 3] ** 2 - R[:, 2] ** 2)).sum())
    r_inner = 0.5
    r_outer = 1.0 - 2.0 ** -(grid.k_max + 1)
    annulus = math.pi * (r_outer**2 - r_inner**2)

    bad_refined = 0
    for U in whitney_boxes(grid):
        kids = refine(U)
        if abs(sum(P.volume for P in kids) - U.volume) > 1e-14:
            bad_refined += 1
        for P in kids:
            e = P.extent
            if not (U.cube.extent[0] <= e[0] < e[1] <= U.cube.extent[1]
                    and U.radial_interval[0] <= e[2] < e[3] <= U.radial_interval[1]):
                bad_refined += 1
    return {"boxes": R.shape[0], "overlapping_pairs": n_overlap, "volume": volume,
            "annulus_volume": annulus, "volume_error": abs(volume - annulus),
            "refined_inconsistencies": bad_refined,
            "full_annulus_volume": 0.75 * math.pi}
