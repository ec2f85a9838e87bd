"""Elliptic measure of L = -Laplace + B . grad on the ball and its sawtooth subdomains.

Three instruments:

* exit-distribution Monte Carlo for dX = -B dt + sqrt(2) dW,
* the disk Poisson kernel (zero drift, exact),
* a finite-difference solver on a polar lattice graded toward the circle.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy import integrate
from scipy.sparse.linalg import splu

from . import _kernels as K
from .drift import DriftFieldSpec
from .dyadic import n_cubes
from .errors import DomainMembershipError, SchemeError, UnsupportedError
from .geometry import Ball, DomainHandle, RemovedBoxDomain, as_point

TWO_PI = 2.0 * math.pi
QUARTER = 0.25 * math.pi


@dataclass(frozen=True)
class WalkerConfig:
    """Euler-Maruyama walker settings.

    Random numbers come from Philox streams keyed by (seed, stream, batch):
    walkers are simulated in fixed-size batches so results do not depend on
    the number of threads.
    """

    rho: float = 0.1
    dabs: float = 1e-4
    max_steps: int = 10**7
    seed: int = 0
    batch: int = 1024
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.rho <= 0.5:
            raise ValueError("step factor rho must lie in (0, 0.5]")
        if not self.dabs > 0:
            raise ValueError("absorption depth must be positive")
        if self.max_steps < 1 or self.batch < 1:
            raise ValueError("max_steps and batch must be positive")
        if not 0 <= self.seed < 2**63:
            raise ValueError("seed must be a nonnegative 63-bit integer")


def _generator(seed, stream, batch):
    return np.random.Generator(np.random.Philox(key=[seed, (stream << 32) | batch]))


@dataclass
class ExitSample:
    points: np.ndarray
    codes: np.ndarray
    steps: np.ndarray
    escaped: np.ndarray

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def completed(self):
        return ~self.escaped

    @staticmethod
    def concat(parts):
        return ExitSample(np.vstack([p.points for p in parts]), np.concatenate([p.codes for p in parts]),
                          np.concatenate([p.steps for p in parts]), np.concatenate([p.escaped for p in parts]))


def _require_packable(dom, spec):
    if spec.dim != dom.dim:
        raise ValueError("drift and domain dimensions differ")
    return dom.pack(), spec.pack()


def sample_exits(x, dom: DomainHandle, spec: DriftFieldSpec, n, cfg: WalkerConfig = None,
                 stream=0) -> ExitSample:
    """Simulate ``n`` independent walkers from x until absorption at the boundary of dom."""
    cfg = cfg or WalkerConfig()
    x = as_point(x)
    (kind, params, boxes), dpack = _require_packable(dom, spec)
    near = np.empty(x.size)
    inside, _, _ = K.locate(x, kind, params, boxes, near)
    if not inside:
        raise DomainMembershipError(f"pole {x.tolist()} is not inside {dom!r}")
    m_fac = max(1.0, spec.declared_M * spec.scale)
    sizes = [min(cfg.batch, n - s) for s in range(0, n, cfg.batch)]

    def run(b):
        rng = _generator(cfg.seed, stream, b)
        return ExitSample(*K.walk_batch(x, sizes[b], kind, params, boxes, *dpack, m_fac,
                                        cfg.rho, cfg.dabs, cfg.max_steps, rng))

    if not sizes:
        d = x.size
        return ExitSample(np.zeros((0, d)), np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, bool))
    if cfg.threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]
    return ExitSample.concat(parts)


@dataclass(frozen=True)
class ExitResult:
    point: np.ndarray
    code: int
    steps: int
    escaped: bool


def simulate_exit(x, dom: DomainHandle, spec: DriftFieldSpec, cfg: WalkerConfig = None, walker=0) -> ExitResult:
    """One trajectory; ``walker`` selects the stream so distinct calls are independent."""
    s = sample_exits(x, dom, spec, 1, cfg, stream=walker + 1)
    return ExitResult(s.points[0], int(s.codes[0]), int(s.steps[0]), bool(s.escaped[0]))


# ------------------------------------------------------------------ partitions


def _angles(points):
    return np.mod(np.arctan2(points[:, 1], points[:, 0]), TWO_PI)


def _patch_index(points, k):
    p = np.asarray(points, dtype=float)
    ax = np.argmax(np.abs(p), axis=1)
    idx = np.arange(p.shape[0])
    m = np.abs(p[idx, ax])
    face = 2 * ax + (p[idx, ax] < 0)
    i = np.where(ax == 0, 1, 0)
    j = np.where(ax == 2, 1, 2)
    a = np.arctan(p[idx, i] / m)
    b = np.arctan(p[idx, j] / m)
    side = 2 ** (k - 1)
    h = 2 * QUARTER / side
    ia = np.clip(((a + QUARTER) / h).astype(np.int64), 0, side - 1)
    ib = np.clip(((b + QUARTER) / h).astype(np.int64), 0, side - 1)
    return face * 4 ** (k - 1) + ia * side + ib


class Partition:
    """A finite partition of a domain boundary into labelled cells."""

    labels: list

    @property
    def n_cells(self):
        return len(self.labels)

    def assign(self, points, codes) -> np.ndarray:
        raise NotImplementedError

    def describe(self):
        return {"kind": type(self).__name__}


class ArcPartition(Partition):
    """Circle cells between consecutive ``edges`` (angles in [0, 2 pi])."""

    def __init__(self, edges):
        e = np.asarray(edges, dtype=float)
        if e[0] != 0.0 or not math.isclose(e[-1], TWO_PI) or np.any(np.diff(e) <= 0):
            raise ValueError("arc edges must increase from 0 to 2 pi")
        self.edges = e
        self.labels = [f"arc[{i}]" for i in range(e.size - 1)]

    def assign(self, points, codes=None):
        return np.clip(np.searchsorted(self.edges, _angles(points), side="right") - 1, 0, self.n_cells - 1)

    def arcs(self):
        return list(zip(self.edges[:-1], self.edges[1:]))

    def describe(self):
        return {"kind": "arcs", "n": self.n_cells}


class DyadicPartition(Partition):
    """Generation-k dyadic cells of the unit sphere (arcs in 2-D, patches in 3-D)."""

    def __init__(self, dim, k):
        self.dim, self.k = dim, k
        self.labels = [f"Q[{k},{j}]" for j in range(n_cubes(dim, k))]
        if dim == 2:
            self._arcs = ArcPartition(np.linspace(0.0, TWO_PI, n_cubes(2, k) + 1))

    def assign(self, points, codes=None):
        if self.dim == 2:
            return self._arcs.assign(points)
        return _patch_index(points, self.k)

    def arcs(self):
        return self._arcs.arcs()

    def describe(self):
        return {"kind": "dyadic", "dim": self.dim, "k": self.k}


class SawtoothPartition(Partition):
    """Sphere cells of generation k plus face cells of each removed box.

    Top faces are cut at the generation-k arc edges; lateral faces into
    ``n_lateral`` equal radial pieces.
    """

    def __init__(self, dom: RemovedBoxDomain, k, n_lateral=4):
        if dom.dim != 2:
            raise UnsupportedError("sawtooth partitions are planar")
        self.dom, self.k, self.n_lateral = dom, k, n_lateral
        self.sphere = DyadicPartition(2, k)
        labels = list(self.sphere.labels)
        self._offsets = []
        w = TWO_PI / n_cubes(2, k)
        for b, (lo, hi, rlo, rhi) in enumerate(dom.boxes):
            j0, j1 = int(math.floor(lo / w + 1e-9)), int(math.ceil(hi / w - 1e-9))
            self._offsets.append((len(labels), j0, j1))
            labels += [f"box{b}.top[{j}]" for j in range(j0, j1)]
            labels += [f"box{b}.lo[{i}]" for i in range(n_lateral)]
            labels += [f"box{b}.hi[{i}]" for i in range(n_lateral)]
        self.labels = labels

    def assign(self, points, codes):
        out = self.sphere.assign(points)
        codes = np.asarray(codes)
        w = TWO_PI / n_cubes(2, self.k)
        r = np.linalg.norm(points, axis=1)
        th = _angles(points)
        for b, (start, j0, j1) in enumerate(self._offsets):
            lo, hi, rlo, rhi = self.dom.boxes[b]
            ntop = j1 - j0
            top = codes == 3 * b
            jj = np.clip(np.floor((th[top] - j0 * w) / w).astype(np.int64), 0, ntop - 1)
            out[top] = start + jj
            for side, off in ((1, ntop), (2, ntop + self.n_lateral)):
                m = codes == 3 * b + side
                ii = np.clip(((r[m] - rlo) / (1.0 - rlo) * self.n_lateral).astype(np.int64), 0, self.n_lateral - 1)
                out[m] = start + off + ii
        return out

    def describe(self):
        return {"kind": "sawtooth", "k": self.k, "n_lateral": self.n_lateral, "boxes": len(self.dom.boxes)}


class IndicatorPartition(Partition):
    """Two cells: the set F given by a predicate on (points, codes), and the rest."""

    def __init__(self, predicate: Callable, name="F"):
        self.predicate = predicate
        self.labels = [name, f"not {name}"]

    def assign(self, points, codes):
        return np.where(np.asarray(self.predicate(points, codes), dtype=bool), 0, 1)

    def describe(self):
        return {"kind": "indicator", "name": self.labels[0]}


def arc_predicate(lo, hi):
    """Membership in the closed arc [lo, hi] of the unit circle (mod 2 pi)."""
    def pred(points, codes=None):
        s = np.mod(_angles(points) - lo, TWO_PI)
        return (s <= hi - lo) & (np.linalg.norm(points, axis=1) > 1 - 1e-9)
    return pred


# -------------------------------------------------------------- estimates


@dataclass
class MeasureEstimate:
    pole: np.ndarray
    domain: str
    labels: list
    counts: np.ndarray
    walkers: int
    escaped: int
    config: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def completed(self):
        return self.walkers - self.escaped

    @property
    def mass(self):
        return self.counts / max(self.completed, 1)

    @property
    def stderr(self):
        m = self.mass
        return np.sqrt(m * (1.0 - m) / max(self.completed, 1))

    @property
    def escaped_fraction(self):
        return self.escaped / max(self.walkers, 1)

    def __getitem__(self, label):
        i = self.labels.index(label)
        return float(self.mass[i]), float(self.stderr[i])

    def to_tsv(self, path=None):
        meta = {"pole": self.pole.tolist(), "domain": self.domain, "walkers": self.walkers,
                "escaped": self.escaped, "config": self.config, "warnings": self.warnings}
        lines = ["# measure " + json.dumps(meta, sort_keys=True), "cell\tlabel\tcount\tmass\tstderr"]
        for i, (lab, c, m, s) in enumerate(zip(self.labels, self.counts, self.mass, self.stderr)):
            lines.append(f"{i}\t{lab}\t{int(c)}\t{m:.12g}\t{s:.12g}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_tsv(cls, path):
        lines = Path(path).read_text().splitlines()
        meta = json.loads(lines[0][len("# measure "):])
        labels, counts = [], []
        for line in lines[2:]:
            _, lab, c, _, _ = line.split("\t")
            labels.append(lab)
            counts.append(int(c))
        return cls(np.array(meta["pole"]), meta["domain"], labels, np.array(counts), meta["walkers"],
                   meta["escaped"], meta["config"], meta["warnings"])


def bin_exits(sample: ExitSample, partition: Partition):
    ok = sample.completed
    idx = partition.assign(sample.points[ok], sample.codes[ok])
    return np.bincount(idx, minlength=partition.n_cells).astype(np.int64)


def estimate_measure(x, dom: DomainHandle, spec: DriftFieldSpec, partition: Partition, n_walkers,
                     cfg: WalkerConfig = None, stream=0) -> MeasureEstimate:
    cfg = cfg or WalkerConfig()
    s = sample_exits(x, dom, spec, n_walkers, cfg, stream)
    counts = bin_exits(s, partition)
    est = MeasureEstimate(as_point(x), repr(dom), list(partition.labels), counts, s.n,
                          int(s.escaped.sum()),
                          {"walker": asdict(cfg), "drift": spec.describe(), "partition": partition.describe(),
                           "stream": stream})
    if est.escaped_fraction > 0.01:
        msg = f"{est.escaped_fraction:.2%} of walkers hit max_steps; estimate may be biased"
        est.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return est


# ------------------------------------------------------------ Poisson oracle


def poisson_kernel(x, eta):
    r = math.hypot(x[0], x[1])
    t = math.atan2(x[1], x[0])
    return (1.0 - r * r) / (TWO_PI * (1.0 - 2.0 * r * math.cos(t - eta) + r * r))


def poisson_measure(x, arc, dom: DomainHandle = None) -> float:
    """Harmonic measure of the arc [lo, hi] of the unit circle seen from x (zero drift)."""
    if dom is not None and not (isinstance(dom, Ball) and dom.dim == 2 and dom.radius == 1.0
                                and not np.any(dom.center)):
        raise UnsupportedError("the Poisson oracle is only available on the unit disk")
    x = as_point(x)
    if x.size != 2 or math.hypot(*x) >= 1.0:
        raise ValueError("pole must be inside the unit disk")
    lo, hi = float(arc[0]), float(arc[1])
    if hi - lo >= TWO_PI:
        return 1.0
    t = math.atan2(x[1], x[0])
    # split at the pole direction where the kernel peaks
    pts = [lo + ((t - lo) % TWO_PI)] if (t - lo) % TWO_PI < hi - lo else []
    edges = [lo] + pts + [hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, _ = integrate.quad(lambda e: poisson_kernel(x, e), a, b, epsabs=0.0, epsrel=1e-13, limit=400)
        total += v
    return total


def poisson_measure_closed(x, arc):
    """Closed form: (1/pi) arg((e^{i b} - z) / (e^{i a} - z)) - (b - a) / (2 pi)."""
    z = complex(x[0], x[1])
    a, b = arc
    ang = np.angle((np.exp(1j * b) - z) / (np.exp(1j * a) - z))
    if ang < 0 and b - a > 0:
        ang += TWO_PI
    return ang / math.pi - (b - a) / TWO_PI


# -------------------------------------------------------- finite differences


@dataclass
class SolutionGrid:
    """u on a polar lattice; row 0 of ``u`` is r = radii[0] > 0, last row the circle."""

    radii: np.ndarray
    thetas: np.ndarray
    u: np.ndarray
    u_origin: float
    f: np.ndarray
    drift: np.ndarray
    h: float

    def value_at(self, x):
        """Bilinear interpolation in (r, theta)."""
        r = math.hypot(x[0], x[1])
        t = math.atan2(x[1], x[0]) % TWO_PI
        rad = np.concatenate([[0.0], self.radii])
        vals = np.vstack([np.full(self.thetas.size, self.u_origin), self.u])
        i = int(np.clip(np.searchsorted(rad, r) - 1, 0, rad.size - 2))
        s = (r - rad[i]) / (rad[i + 1] - rad[i])
        dth = TWO_PI / self.thetas.size
        jf = (t - self.thetas[0]) / dth
        j0 = int(math.floor(jf)) % self.thetas.size
        j1 = (j0 + 1) % self.thetas.size
        w = jf - math.floor(jf)
        row = lambda k: (1 - w) * vals[k, j0] + w * vals[k, j1]
        return float((1 - s) * row(i) + s * row(i + 1))

    def dump(self, path=None):
        lines = [f"# fd grid n_r={self.radii.size} n_theta={self.thetas.size} h={self.h:.6g} u0={self.u_origin:.12g}",
                 "r\ttheta\tu"]
        for i, r in enumerate(self.radii):
            for j, t in enumerate(self.thetas):
                lines.append(f"{r:.12g}\t{t:.12g}\t{self.u[i, j]:.12g}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def graded_radii(h, extra=(), inner=0.5, delta_min=None):
    """Radial nodes: step h up to ``inner``, then geometric steps 2 h delta toward r = 1."""
    if not 0 < h < 0.25:
        raise ValueError("mesh parameter h must lie in (0, 1/4)")
    delta_min = delta_min if delta_min is not None else h / 4
    r = list(np.arange(h, inner + 1e-12, h))
    d = 1.0 - r[-1]
    while d * (1.0 - 2.0 * h) > delta_min:
        d *= 1.0 - 2.0 * h
        r.append(1.0 - d)
    r.append(1.0)
    r = np.unique(np.concatenate([r, np.asarray(extra, dtype=float)]))
    return r[(r > 0) & (r <= 1.0)]


@dataclass
class FDOperator:
    radii: np.ndarray
    thetas: np.ndarray
    lu: object
    bnd: sp.csr_matrix  # coupling of interior rows to boundary values
    drift: np.ndarray
    h: float
    upwind_nodes: int


def fd_assemble(spec: DriftFieldSpec, h=0.02, n_theta=None, extra_radii=(), theta0=0.0):
    """Assemble and factor the discrete operator for Delta u - B . grad u = 0 on the disk."""
    if spec.dim != 2:
        raise UnsupportedError("the finite-difference solver is planar")
    radii = graded_radii(h, extra_radii)
    if n_theta is None:
        n_theta = int(32 * math.ceil(TWO_PI / h / 32))
    thetas = theta0 + np.arange(n_theta) * TWO_PI / n_theta
    dth = TWO_PI / n_theta
    nr = radii.size - 1  # interior rings
    R, T = np.meshgrid(radii[:nr], thetas, indexing="ij")
    pts = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
    Bv = spec.evaluate(pts).reshape(nr, n_theta, 2)
    Br = Bv[..., 0] * np.cos(T) + Bv[..., 1] * np.sin(T)
    Bt = -Bv[..., 0] * np.sin(T) + Bv[..., 1] * np.cos(T)

    N = 1 + nr * n_theta  # origin + interior nodes
    rr = radii[:nr, None]
    rm = np.concatenate([[0.0], radii[:nr - 1]])[:, None]
    hm, hp = rr - rm, radii[1:, None] - rr
    c = 1.0 / rr - Br          # coefficient of u_r
    ct = -Bt / rr              # coefficient of u_theta
    a_p = np.broadcast_to(2.0 / (hp * (hm + hp)), c.shape).copy()
    a_m = np.broadcast_to(2.0 / (hm * (hm + hp)), c.shape).copy()
    central = np.abs(c) * np.maximum(hm, hp) <= 2.0
    HM, HP = np.broadcast_to(hm, c.shape), np.broadcast_to(hp, c.shape)
    a_p += np.where(central, c * HM / (HP * (HM + HP)), np.where(c > 0, c / HP, 0.0))
    a_m -= np.where(central, c * HP / (HM * (HM + HP)), np.where(c < 0, c / HM, 0.0))
    g = np.broadcast_to(1.0 / (rr * rr * dth * dth), c.shape)
    tcen = np.abs(ct) * dth <= 2.0 * g
    t_p = g + np.where(tcen, ct / (2 * dth), np.where(ct > 0, ct / dth, 0.0))
    t_m = g - np.where(tcen, ct / (2 * dth), np.where(ct < 0, ct / dth, 0.0))
    upwind = int((~central).sum() + (~tcen).sum())

    I, J = np.meshgrid(np.arange(nr), np.arange(n_theta), indexing="ij")
    k = 1 + I * n_theta + J
    kp = 1 + I * n_theta + (J + 1) % n_theta
    km = 1 + I * n_theta + (J - 1) % n_theta
    kin = np.where(I == 0, 0, k - n_theta)
    rows = [k, k, k, k]
    cols = [k, kp, km, kin]
    vals = [-(a_p + a_m) - t_p - t_m, t_p, t_m, a_m]
    has_out = I + 1 < nr
    rows.append(k[has_out]); cols.append(k[has_out] + n_theta); vals.append(a_p[has_out])
    rows = [np.ravel(a) for a in rows]
    cols = [np.ravel(a) for a in cols]
    vals = [np.ravel(a) for a in vals]
    last = ~has_out
    brow, bcol, bval = k[last], J[last], a_p[last]
    # origin: average of the first ring
    rows += [np.zeros(n_theta + 1, np.int64)]
    cols += [np.concatenate([[0], 1 + np.arange(n_theta)])]
    vals += [np.concatenate([[-1.0], np.full(n_theta, 1.0 / n_theta)])]
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    # negate so the operator has positive diagonal and nonpositive off-diagonals
    A = -A
    off = A - sp.diags(A.diagonal())
    if off.max() > 1e-12 or A.diagonal().min() <= 0:
        raise SchemeError("discrete operator is not an M-matrix; refine the mesh for this drift")
    Bm = -sp.csr_matrix((bval, (brow, bcol)), shape=(N, n_theta))
    hr = float(np.max(np.diff(np.concatenate([[0.0], radii]))))
    return FDOperator(radii, thetas, splu(A.tocsc()), Bm, Bv, max(hr, dth), upwind)


def boundary_cell_fractions(thetas, arc):
    """Fraction of each boundary node's angular cell inside the arc [lo, hi].

    The fractions of a family of arcs tiling the circle sum to 1 at each node.
    """
    n = thetas.size
    dth = TWO_PI / n
    lo, hi = arc
    a = thetas - 0.5 * dth
    out = np.zeros(n)
    for shift in (-TWO_PI, 0.0, TWO_PI):
        out += np.clip(np.minimum(a + dth, hi + shift) - np.maximum(a, lo + shift), 0.0, None)
    return out / dth


def fd_solve_many(op: FDOperator, data):
    """Solve for several boundary data vectors (values at ``op.thetas``)."""
    out = []
    for f in data:
        f = np.asarray(f, dtype=float)
        rhs = -(op.bnd @ f)
        sol = op.lu.solve(rhs)
        u = np.vstack([sol[1:].reshape(op.radii.size - 1, op.thetas.size), f[None, :]])
        tol = 1e-9 * max(1.0, float(np.abs(f).max()))
        if u.min() < f.min() - tol or u.max() > f.max() + tol or not (f.min() - tol <= sol[0] <= f.max() + tol):
            raise SchemeError("discrete maximum principle violated")
        out.append(SolutionGrid(op.radii, op.thetas, u, float(sol[0]), f, op.drift, op.h))
    return out


def fd_solve(spec: DriftFieldSpec, f, h=0.02, n_theta=None, extra_radii=(), theta0=0.0) -> SolutionGrid:
    """Solve the Dirichlet problem on the unit disk; ``f`` maps angles to values."""
    op = fd_assemble(spec, h, n_theta, extra_radii, theta0)
    return fd_solve_many(op, [f(op.thetas) if callable(f) else f])[0]


# ------------------------------------------------------------ Markov identity


@dataclass
class MarkovReport:
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    outer_walkers: int
    inner_walkers: int
    shared_fraction: float
    n_cells: int
    partial: bool
    escaped: int
    oracle: Optional[float] = None

    @property
    def residual(self):
        return abs(self.lhs - self.rhs)

    @property
    def combined_stderr(self):
        return math.hypot(self.lhs_stderr, self.rhs_stderr)

    @property
    def within(self):
        return self.residual <= 3.0 * self.combined_stderr


def _cells_of(points, codes, k):
    r = np.linalg.norm(points, axis=1)
    ang = np.floor(_angles(points) / (TWO_PI / n_cubes(2, k))).astype(np.int64)
    rad = np.minimum((r * 16).astype(np.int64), 15)
    keys = np.column_stack([codes, ang, rad])
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    return uniq, inv.ravel()


def markov_identity_check(x, omega_p: DomainHandle, lambda_prev: DomainHandle, F: Callable,
                          spec: DriftFieldSpec, n_outer=10**5, n_inner=10**4, n_lhs=None,
                          cfg: WalkerConfig = None, k_est=5, target_stderr=None, oracle=None) -> MarkovReport:
    """Two-route estimate of omega^x_{Omega_p}(F).

    Left side: direct walkers in Omega_p.  Right side: walkers stopped on the
    boundary of Lambda_{p-1}; those stopped on the boundary of Omega_p count
    1_F directly, the rest are grouped into cells and inner walkers restart
    from the recorded stopping points (round robin within a cell).
    """
    cfg = cfg or WalkerConfig()
    n_lhs = n_lhs or n_outer
    direct = sample_exits(x, omega_p, spec, n_lhs, cfg, stream=1)
    ok = direct.completed
    hits = np.asarray(F(direct.points[ok], direct.codes[ok]), dtype=bool)
    lhs = float(hits.mean())
    lhs_se = math.sqrt(lhs * (1 - lhs) / max(ok.sum(), 1))

    outer = sample_exits(x, lambda_prev, spec, n_outer, cfg, stream=2)
    ok = outer.completed
    Y, C = outer.points[ok], outer.codes[ok]
    n_done = Y.shape[0]
    okind, dist = K.locate_many(np.ascontiguousarray(Y), *omega_p.pack())[:2]
    shared = (~okind) | (dist < 1e-9)
    Z = np.zeros(n_done)
    if shared.any():
        Z[shared] = np.asarray(F(Y[shared], C[shared]), dtype=float)
    inner_used = 0
    var_inner = 0.0
    escaped = int(direct.escaped.sum() + outer.escaped.sum())
    free = np.flatnonzero(~shared)
    n_cells = 0
    if free.size:
        _, cell = _cells_of(Y[free], C[free], k_est)
        n_cells = int(cell.max()) + 1
        counts = np.bincount(cell, minlength=n_cells)
        alloc = np.maximum(2, np.round(n_inner * counts / free.size)).astype(int)
        stream = 3
        for c in range(n_cells):
            members = free[cell == c]
            n_c = alloc[c]
            starts = np.bincount(np.arange(n_c) % members.size, minlength=members.size)
            hit = 0
            done = 0
            for m_idx, reps in zip(members, starts):
                if reps == 0:
                    continue
                s = sample_exits(Y[m_idx], omega_p, spec, int(reps), cfg, stream=stream)
                stream += 1
                escaped += int(s.escaped.sum())
                good = s.completed
                hit += int(np.asarray(F(s.points[good], s.codes[good]), dtype=bool).sum())
                done += int(good.sum())
            inner_used += int(n_c)
            m_c = hit / max(done, 1)
            Z[members] = m_c
            m_var = (hit + 0.5) / (done + 1.0)
            p_c = members.size / n_done
            var_inner += p_c**2 * m_var * (1 - m_var) / max(done, 1)
    rhs = float(Z.mean())
    rhs_se = math.sqrt(Z.var(ddof=1) / n_done + var_inner) if n_done > 1 else math.inf
    rep = MarkovReport(lhs, lhs_se, rhs, rhs_se, n_outer, inner_used, float(shared.mean()) if n_done else 0.0,
                       n_cells, False, escaped, oracle)
    if target_stderr is not None and rep.combined_stderr > target_stderr:
        rep.partial = True
    return rep


def nested_disk_config(R=0.8, arc=(0.0, math.pi / 4)):
    """Omega = unit disk, Lambda = B(0, R): the trivial-sawtooth configuration."""
    return Ball(np.zeros(2), 1.0), Ball(np.zeros(2), R), arc_predicate(*arc)


def nested_disk_oracle(x, R, arc, n_quad=4000):
    """Composition of Poisson kernels: integral over |y| = R of omega^y(arc) d omega^x_{B(0,R)}."""
    x = as_point(x)
    phi = (np.arange(n_quad) + 0.5) * TWO_PI / n_quad
    xs = x / R
    r2 = xs @ xs
    t = math.atan2(xs[1], xs[0])
    w = (1 - r2) / (TWO_PI * (1 - 2 * math.sqrt(r2) * np.cos(phi - t) + r2)) * (TWO_PI / n_quad)
    inner = np.array([poisson_measure_closed((R * math.cos(p), R * math.sin(p)), arc) for p in phi])
    return float(w @ inner)


def one_notch_config(q_parent=None, q_child=None):
    """Lambda_{p-1} = B minus S_{Q'} (Q' of generation 1), Omega_p = B minus T_Q.

    Q is the first child of Q'; F is the lateral face of T_Q at the far
    angle of Q, which lies inside S_{Q'} and is not shared with Lambda_{p-1}.
    """
    from .dyadic import DyadicCube
    from .whitney import carleson_box
    Qp = q_parent or DyadicCube(2, 1, 0)
    Q = q_child or Qp.children()[0]
    lam = RemovedBoxDomain([carleson_box(Qp).polar_row("S")], 2, label="Lambda")
    om = RemovedBoxDomain([carleson_box(Q).polar_row("T")], 2, label="Omega")

    def F(points, codes):
        return np.asarray(codes) == 2
    return om, lam, F, Q, Qp


def fd_arc_measures(spec: DriftFieldSpec, pole, arcs, h=0.02, n_theta=None):
    """FD estimate of omega^pole(arc) for each arc, using cell-averaged indicator data.

    Returns (values, h) where h is the mesh parameter of the solve.
    """
    op = fd_assemble(spec, h, n_theta)
    data = [boundary_cell_fractions(op.thetas, a) for a in arcs]
    sols = fd_solve_many(op, data)
    return np.array([s.value_at(pole) for s in sols]), op.h
