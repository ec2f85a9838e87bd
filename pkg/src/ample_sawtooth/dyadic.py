"""Dyadic grids on the unit circle (exact arcs) and sphere (cubed sphere).

Generation k of the circle grid consists of 2**(k+2) half-open arcs
[2 pi j / N, 2 pi (j+1) / N).  Generation k of the sphere grid consists of
6 * 4**(k-1) patches obtained by bisecting the equiangular coordinates of the
six faces of the circumscribed cube.  Generations start at k = 1.

The grid is implicit: cubes are computed from (dim, k, j) on demand, so a
2-D grid with k_max = 24 costs nothing until a generation is enumerated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import GridRangeError

TWO_PI = 2.0 * math.pi
QUARTER = math.pi / 4.0
K_MAX_LIMIT = {2: 24, 3: 10}


def n_cubes(dim: int, k: int) -> int:
    return 2 ** (k + 2) if dim == 2 else 6 * 4 ** (k - 1)


def _face_axes(face):
    ax = face // 2
    sign = 1.0 if face % 2 == 0 else -1.0
    i, j = [c for c in range(3) if c != ax]
    return ax, sign, i, j


def patch_point(face, a, b):
    """Unit vector(s) on the sphere for equiangular face coordinates."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ax, sign, i, j = _face_axes(int(face))
    p = np.zeros(np.broadcast(a, b).shape + (3,))
    p[..., ax] = sign
    p[..., i] = np.tan(a)
    p[..., j] = np.tan(b)
    return p / np.linalg.norm(p, axis=-1, keepdims=True)


def _patch_area_integrand(a, b):
    ta, tb = np.tan(a), np.tan(b)
    return (1 + ta**2) * (1 + tb**2) / (1 + ta**2 + tb**2) ** 1.5


def patch_areas(alo, ahi, blo, bhi, rtol=1e-10):
    """Spherical areas of equiangular patches by refined Gauss-Legendre rules.

    The node count doubles until successive results agree to ``rtol``.
    """
    alo, ahi, blo, bhi = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (alo, ahi, blo, bhi))

    def rule(n):
        x, w = np.polynomial.legendre.leggauss(n)
        ha, hb = 0.5 * (ahi - alo), 0.5 * (bhi - blo)
        ma, mb = 0.5 * (ahi + alo), 0.5 * (bhi + blo)
        A = ma[:, None, None] + ha[:, None, None] * x[None, :, None]
        B = mb[:, None, None] + hb[:, None, None] * x[None, None, :]
        vals = _patch_area_integrand(A, B) * w[None, :, None] * w[None, None, :]
        return vals.sum(axis=(1, 2)) * ha * hb

    n = 4
    prev = rule(n)
    while n < 256:
        n *= 2
        cur = rule(n)
        if np.all(np.abs(cur - prev) <= rtol * np.abs(cur)):
            return cur
        prev = cur
    return prev


@dataclass(frozen=True)
class DyadicCube:
    """Cube Q_j^k of the boundary grid.

    In 2-D ``extent`` is (theta_lo, theta_hi); in 3-D it is
    (face, alpha_lo, alpha_hi, beta_lo, beta_hi) in equiangular coordinates.
    """

    dim: int
    generation: int
    index: int

    def __post_init__(self):
        if self.generation < 1 or not 0 <= self.index < n_cubes(self.dim, self.generation):
            raise GridRangeError(f"no cube (k={self.generation}, j={self.index}) in dim {self.dim}")

    @property
    def k(self):
        return self.generation

    @cached_property
    def extent(self):
        k, j = self.generation, self.index
        if self.dim == 2:
            w = TWO_PI / n_cubes(2, k)
            return (j * w, (j + 1) * w)
        per_face = 4 ** (k - 1)
        side = 2 ** (k - 1)
        face, rest = divmod(j, per_face)
        ia, ib = divmod(rest, side)
        h = 2 * QUARTER / side
        return (face, -QUARTER + ia * h, -QUARTER + (ia + 1) * h,
                -QUARTER + ib * h, -QUARTER + (ib + 1) * h)

    @property
    def angular_width(self):
        lo, hi = self.extent[:2] if self.dim == 2 else self.extent[1:3]
        return hi - lo

    @cached_property
    def center(self):
        if self.dim == 2:
            lo, hi = self.extent
            t = 0.5 * (lo + hi)
            return np.array([math.cos(t), math.sin(t)])
        face, alo, ahi, blo, bhi = self.extent
        return patch_point(face, 0.5 * (alo + ahi), 0.5 * (blo + bhi))

    @cached_property
    def surface_measure(self):
        return surface_measure(self)

    def parent(self):
        if self.generation == 1:
            return None
        if self.dim == 2:
            return DyadicCube(2, self.generation - 1, self.index // 2)
        k = self.generation
        face, rest = divmod(self.index, 4 ** (k - 1))
        ia, ib = divmod(rest, 2 ** (k - 1))
        side = 2 ** (k - 2)
        return DyadicCube(3, k - 1, face * 4 ** (k - 2) + (ia // 2) * side + ib // 2)

    def children(self):
        k = self.generation
        if self.dim == 2:
            return [DyadicCube(2, k + 1, 2 * self.index + s) for s in (0, 1)]
        face, rest = divmod(self.index, 4 ** (k - 1))
        ia, ib = divmod(rest, 2 ** (k - 1))
        side = 2**k
        return [DyadicCube(3, k + 1, face * 4**k + (2 * ia + a) * side + 2 * ib + b)
                for a in (0, 1) for b in (0, 1)]

    def ancestor(self, k):
        q = self
        while q.generation > k:
            q = q.parent()
        return q

    def contains(self, other: "DyadicCube") -> bool:
        if other.dim != self.dim or other.generation < self.generation:
            return False
        return other.ancestor(self.generation) == self

    def contains_direction(self, p) -> bool:
        """Whether the direction of point p lies in the (half-open) cube."""
        p = np.asarray(p, dtype=float)
        if self.dim == 2:
            lo, hi = self.extent
            t = math.atan2(p[1], p[0]) % TWO_PI
            return lo <= t < hi
        face, a, b = cube_coords(p)
        f, alo, ahi, blo, bhi = self.extent
        return face == f and alo <= a < ahi and blo <= b < bhi

    def __repr__(self):
        return f"Q(k={self.generation}, j={self.index})"


def cube_coords(p):
    """(face, alpha, beta) for a 3-D direction; faces ordered +x,-x,+y,-y,+z,-z."""
    p = np.asarray(p, dtype=float)
    ax = int(np.argmax(np.abs(p)))
    face = 2 * ax + (0 if p[ax] >= 0 else 1)
    i, j = [c for c in range(3) if c != ax]
    m = abs(p[ax])
    return face, math.atan(p[i] / m), math.atan(p[j] / m)


def surface_measure(Q: DyadicCube) -> float:
    """Exact arc length in 2-D; quadrature area (rel. error < 1e-8) in 3-D."""
    if Q.dim == 2:
        lo, hi = Q.extent
        return hi - lo
    _, alo, ahi, blo, bhi = Q.extent
    return float(patch_areas(alo, ahi, blo, bhi)[0])


@dataclass(frozen=True)
class DyadicGrid:
    dim: int
    k_max: int
    k_min: int = 1

    def generation(self, k):
        self._check(k)
        return [DyadicCube(self.dim, k, j) for j in range(n_cubes(self.dim, k))]

    def count(self, k):
        return n_cubes(self.dim, k)

    def cube(self, k, j):
        self._check(k)
        return DyadicCube(self.dim, k, j)

    def cube_at(self, p, k):
        """The generation-k cube containing the direction of p."""
        self._check(k)
        p = np.asarray(p, dtype=float)
        if self.dim == 2:
            t = math.atan2(p[1], p[0]) % TWO_PI
            N = n_cubes(2, k)
            return DyadicCube(2, k, min(int(t / (TWO_PI / N)), N - 1))
        face, a, b = cube_coords(p)
        side = 2 ** (k - 1)
        h = 2 * QUARTER / side
        ia = min(int((a + QUARTER) / h), side - 1)
        ib = min(int((b + QUARTER) / h), side - 1)
        return DyadicCube(3, k, face * 4 ** (k - 1) + ia * side + ib)

    def arcs(self, k):
        """Vectorised (lo, hi) angles of generation k (2-D)."""
        N = n_cubes(2, k)
        j = np.arange(N)
        w = TWO_PI / N
        return j * w, (j + 1) * w

    def patches(self, k):
        """Vectorised (face, alo, ahi, blo, bhi) of generation k (3-D)."""
        side = 2 ** (k - 1)
        j = np.arange(n_cubes(3, k))
        face, rest = np.divmod(j, side * side)
        ia, ib = np.divmod(rest, side)
        h = 2 * QUARTER / side
        return (face, -QUARTER + ia * h, -QUARTER + (ia + 1) * h,
                -QUARTER + ib * h, -QUARTER + (ib + 1) * h)

    def measures(self, k):
        if self.dim == 2:
            lo, hi = self.arcs(k)
            return hi - lo
        _, alo, ahi, blo, bhi = self.patches(k)
        return patch_areas(alo, ahi, blo, bhi)

    def children(self, Q):
        return Q.children() if Q.generation < self.k_max else []

    def parent(self, Q):
        return Q.parent()

    @property
    def total_measure(self):
        return TWO_PI if self.dim == 2 else 4.0 * math.pi

    def _check(self, k):
        if not self.k_min <= k <= self.k_max:
            raise GridRangeError(f"generation {k} outside [{self.k_min}, {self.k_max}]")


def build_grid(dim: int, k_max: int) -> DyadicGrid:
    if dim not in K_MAX_LIMIT:
        raise GridRangeError(f"dimension must be 2 or 3, got {dim}")
    if not 1 <= k_max <= K_MAX_LIMIT[dim]:
        raise GridRangeError(f"k_max must lie in [1, {K_MAX_LIMIT[dim]}] for dim={dim}, got {k_max}")
    return DyadicGrid(dim, k_max)


# ------------------------------------------------------------ grid properties


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    witness: object = None


@dataclass
class PropertyReport:
    dim: int
    k_max: int
    results: list
    a0: float
    C_star: float
    gamma: float
    per_generation: dict

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def __getitem__(self, name):
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def lines(self):
        out = [f"# dyadic grid properties dim={self.dim} k_max={self.k_max}",
               f"a0\t{self.a0:.6g}", f"C_star\t{self.C_star:.6g}", f"gamma\t{self.gamma:.6g}"]
        for r in self.results:
            out.append(f"{r.name}\t{'pass' if r.passed else 'FAIL'}\t"
                       + " ".join(f"{k}={v}" for k, v in r.detail.items()))
        return out


def _nesting_2d(grid, exhaustive_limit=2 * 10**7):
    bad = []
    for k in range(1, grid.k_max):
        klo, khi = grid.arcs(k)
        for m in range(k + 1, grid.k_max + 1):
            mlo, mhi = grid.arcs(m)
            if klo.size * mlo.size <= exhaustive_limit:
                contains = (klo[:, None] <= mlo[None, :] + 1e-15) & (mhi[None, :] <= khi[:, None] + 1e-15)
                overlap = (np.minimum(khi[:, None], mhi[None, :]) - np.maximum(klo[:, None], mlo[None, :])) > 1e-15
                n_cont = contains.sum(axis=0)
                if np.any(n_cont != 1) or np.any(overlap & ~contains):
                    bad.append((k, m))
            else:
                idx = np.searchsorted(khi, mlo, side="right")
                ok = (idx < khi.size)
                ok[ok] &= (klo[idx[ok]] <= mlo[ok] + 1e-15) & (mhi[ok] <= khi[idx[ok]] + 1e-15)
                if not ok.all():
                    bad.append((k, m))
            # the parent map must agree with geometric containment
            j = np.arange(mlo.size)
            anc = j >> (m - k)
            if not np.all((klo[anc] <= mlo + 1e-15) & (mhi <= khi[anc] + 1e-15)):
                bad.append((k, m, "parent-map"))
    return bad


def _nesting_3d(grid):
    bad = []
    for k in range(1, grid.k_max):
        kf, kalo, kahi, kblo, kbhi = grid.patches(k)
        for m in range(k + 1, grid.k_max + 1):
            mf, malo, mahi, mblo, mbhi = grid.patches(m)
            side_m, side_k = 2 ** (m - 1), 2 ** (k - 1)
            j = np.arange(mf.size)
            rest = j % (side_m * side_m)
            ia, ib = np.divmod(rest, side_m)
            s = m - k
            anc = mf * side_k * side_k + (ia >> s) * side_k + (ib >> s)
            ok = ((kf[anc] == mf) & (kalo[anc] <= malo + 1e-15) & (mahi <= kahi[anc] + 1e-15)
                  & (kblo[anc] <= mblo + 1e-15) & (mbhi <= kbhi[anc] + 1e-15))
            # uniqueness: the generation-k patch holding the midpoint is the ancestor
            h = 2 * QUARTER / side_k
            ja = np.minimum(((0.5 * (malo + mahi) + QUARTER) / h).astype(int), side_k - 1)
            jb = np.minimum(((0.5 * (mblo + mbhi) + QUARTER) / h).astype(int), side_k - 1)
            holder = mf * side_k * side_k + ja * side_k + jb
            if not ok.all() or np.any(holder != anc):
                bad.append((k, m))
    return bad


def _edge_samples(face, alo, ahi, blo, bhi, n):
    t = np.linspace(0.0, 1.0, n)
    a = np.concatenate([alo + (ahi - alo) * t, np.full(n, ahi), ahi - (ahi - alo) * t, np.full(n, alo)])
    b = np.concatenate([np.full(n, blo), blo + (bhi - blo) * t, np.full(n, bhi), bhi - (bhi - blo) * t])
    return patch_point(face, a, b)


def _patch_metrics(face, alo, ahi, blo, bhi, k, rhos, n_edge=24, n_quad=24):
    """Diameter, inscribed-ball radius and collar fractions of one patch."""
    edge = _edge_samples(face, alo, ahi, blo, bhi, n_edge)
    diff = edge[:, None, :] - edge[None, :, :]
    diam = float(np.sqrt((diff**2).sum(-1)).max())
    center = patch_point(face, 0.5 * (alo + ahi), 0.5 * (blo + bhi))
    inner = float(np.linalg.norm(edge - center, axis=1).min())
    x, w = np.polynomial.legendre.leggauss(n_quad)
    A = 0.5 * (alo + ahi) + 0.5 * (ahi - alo) * x
    B = 0.5 * (blo + bhi) + 0.5 * (bhi - blo) * x
    AA, BB = np.meshgrid(A, B, indexing="ij")
    wts = np.outer(w, w) * _patch_area_integrand(AA, BB)
    pts = patch_point(face, AA, BB).reshape(-1, 3)
    dense = _edge_samples(face, alo, ahi, blo, bhi, 4 * n_edge)
    dist = np.sqrt(((pts[:, None, :] - dense[None, :, :]) ** 2).sum(-1)).min(axis=1).reshape(AA.shape)
    fracs = [float((wts * (dist <= rho * 2.0**-k)).sum() / wts.sum()) for rho in rhos]
    return diam, inner, fracs


def verify_grid_properties(grid: DyadicGrid) -> PropertyReport:
    """Check grid items (i)-(vi) and fit a0, C_star, gamma."""
    results = []
    per_gen = {}
    total = grid.total_measure
    cover_tol = 1e-10 if grid.dim == 2 else 1e-6

    # (i) cover
    worst = 0.0
    contiguous = True
    for k in range(1, grid.k_max + 1):
        s = float(grid.measures(k).sum())
        worst = max(worst, abs(s - total))
        if grid.dim == 2:
            lo, hi = grid.arcs(k)
            contiguous &= lo[0] == 0.0 and abs(hi[-1] - TWO_PI) < 1e-15 and np.allclose(lo[1:], hi[:-1], rtol=0, atol=1e-15)
    results.append(PropertyResult("i_cover", worst <= cover_tol and contiguous,
                                  {"max_measure_error": f"{worst:.3e}", "contiguous": contiguous}))

    # (ii)-(iii) nesting and unique ancestors
    bad = _nesting_2d(grid) if grid.dim == 2 else _nesting_3d(grid)
    results.append(PropertyResult("ii_iii_nesting", not bad, {"violations": len(bad)}, bad[:5] or None))

    # (iv) diameters, (v) inscribed surface balls, (vi) thin boundaries
    C_iv, a0 = 0.0, math.inf
    for k in range(1, grid.k_max + 1):
        if grid.dim == 2:
            lo, hi = grid.arcs(k)
            w = hi - lo
            diam = 2.0 * np.sin(np.minimum(w, math.pi) / 2.0)
            inner = 2.0 * np.sin(w / 4.0)
            ck, ak = float(diam.max() * 2.0**k), float(inner.min() * 2.0**k)
        else:
            ck, ak = _patch_diam_inner_3d(grid, k)
        per_gen[k] = {"C_iv": ck, "a0": ak}
        C_iv = max(C_iv, ck)
        a0 = min(a0, ak)
    results.append(PropertyResult("iv_diameter", C_iv < math.inf and C_iv <= (4.0 if grid.dim == 2 else 8.0),
                                  {"C_star": f"{C_iv:.6g}"}))
    results.append(PropertyResult("v_surface_ball", a0 > 0, {"a0": f"{a0:.6g}"}))

    rhos = np.array([a0 / 2, a0 / 4, a0 / 8])
    gammas, C_vi = [], 0.0
    for k in range(1, grid.k_max + 1):
        if grid.dim == 2:
            lo, hi = grid.arcs(k)
            w = hi - lo
            collar = np.array([np.minimum(2.0 * np.arcsin(rho * 2.0**-k / 2.0), w / 2.0) * 2.0
                               for rho in rhos])
            ratios = (collar / w[None, :]).max(axis=1)
        else:
            ratios = _collar_ratios_3d(grid, k, rhos)
        g = float(np.polyfit(np.log(rhos), np.log(ratios), 1)[0])
        gammas.append(g)
        ck = float((ratios / rhos**g).max())
        per_gen[k].update({"gamma": g, "C_vi": ck})
        C_vi = max(C_vi, ck)
    gamma = float(np.median(gammas))
    results.append(PropertyResult("vi_thin_boundary", gamma > 0 and C_vi < math.inf,
                                  {"gamma": f"{gamma:.6g}", "C_vi": f"{C_vi:.6g}"}))

    stable = True
    gens = [k for k in per_gen if k >= 3]
    if len(gens) > 1:
        for key in ("C_iv", "a0"):
            vals = np.array([per_gen[k][key] for k in gens])
            stable &= bool(np.ptp(vals) <= 0.05 * vals.mean() * 2)
    results.append(PropertyResult("constants_stable", stable, {"generations": f"3..{grid.k_max}"}))

    return PropertyReport(grid.dim, grid.k_max, results, a0=a0, C_star=max(C_iv, C_vi),
                          gamma=gamma, per_generation=per_gen)


_EXHAUSTIVE_3D = 5
_SAMPLE_3D = 96


def _sample_indices(n):
    if n <= 6 * 4 ** (_EXHAUSTIVE_3D - 1):
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, _SAMPLE_3D).astype(int))


def _patch_diam_inner_3d(grid, k):
    f, alo, ahi, blo, bhi = grid.patches(k)
    C, a = 0.0, math.inf
    for i in _sample_indices(f.size):
        e = _edge_samples(f[i], alo[i], ahi[i], blo[i], bhi[i], 12)
        diam = np.sqrt(((e[:, None] - e[None]) ** 2).sum(-1)).max()
        c = patch_point(f[i], 0.5 * (alo[i] + ahi[i]), 0.5 * (blo[i] + bhi[i]))
        dense = _edge_samples(f[i], alo[i], ahi[i], blo[i], bhi[i], 64)
        inner = np.linalg.norm(dense - c, axis=1).min()
        C = max(C, diam * 2.0**k)
        a = min(a, inner * 2.0**k)
    return float(C), float(a)


def _collar_ratios_3d(grid, k, rhos):
    f, alo, ahi, blo, bhi = grid.patches(k)
    idx = _sample_indices(f.size)
    if idx.size > 64:
        idx = idx[:: max(1, idx.size // 64)]
    worst = np.zeros(len(rhos))
    for i in idx:
        _, _, fr = _patch_metrics(f[i], alo[i], ahi[i], blo[i], bhi[i], k, rhos, n_edge=8, n_quad=16)
        worst = np.maximum(worst, fr)
    return np.maximum(worst, 1e-300)


# ------------------------------------------------------------- serialization


def write_grid(grid: DyadicGrid, path) -> int:
    """Write one line per cube: generation, index, extent..., measure."""
    path = Path(path)
    n = 0
    with path.open("w") as fh:
        fh.write(f"# dyadic grid dim={grid.dim} k_max={grid.k_max}\n")
        if grid.dim == 2:
            fh.write("generation\tindex\ttheta_lo\ttheta_hi\tmeasure\n")
        else:
            fh.write("generation\tindex\tface\talpha_lo\talpha_hi\tbeta_lo\tbeta_hi\tmeasure\n")
        for k in range(1, grid.k_max + 1):
            meas = grid.measures(k)
            if grid.dim == 2:
                lo, hi = grid.arcs(k)
                for j in range(lo.size):
                    fh.write(f"{k}\t{j}\t{lo[j]:.17g}\t{hi[j]:.17g}\t{meas[j]:.17g}\n")
            else:
                f, alo, ahi, blo, bhi = grid.patches(k)
                for j in range(f.size):
                    fh.write(f"{k}\t{j}\t{f[j]}\t{alo[j]:.17g}\t{ahi[j]:.17g}\t{blo[j]:.17g}\t{bhi[j]:.17g}\t{meas[j]:.17g}\n")
            n += meas.size
    return n


def read_grid(path) -> DyadicGrid:
    """Rebuild the grid described by a file written with ``write_grid``."""
    with Path(path).open() as fh:
        head = fh.readline().split()
    opts = dict(tok.split("=") for tok in head if "=" in tok)
    return build_grid(int(opts["dim"]), int(opts["k_max"]))
