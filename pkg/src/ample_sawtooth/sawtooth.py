"""Stopping-time families of bad Whitney boxes and the sawtooth domains they cut out.

Family 1 collects, under each generation-1 root cube, the maximal Whitney
boxes that contain an ASA-bad refined box.  Family p+1 repeats the search
strictly inside the S-regions of family p.  The level domains are

    Omega_p  = B minus the Carleson boxes T_Q of family p,
    Lambda_p = B minus the S-regions S_Q of family p,

and since family p+1 lives inside the S-regions of family p they nest as
Omega_p in Lambda_p in Omega_{p+1}.
"""

from __future__ import annotations

import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .drift import AsaVerdict, DriftFieldSpec, asa_test
from .dyadic import DyadicCube, DyadicGrid, build_grid, n_cubes
from .errors import ConstructionError
from .geometry import RemovedBoxDomain, as_point
from .whitney import carleson_box, refine, whitney_box


def n0_bound(M, eps, eta, n):
    """Certified ceiling ceil(2^n M / (eps eta)) on the number of families."""
    val = Fraction(2**n) * Fraction(str(M)) / (Fraction(str(eps)) * Fraction(str(eta)))
    return math.ceil(val)


class AsaClassifier:
    """Memoised good/bad classification of Whitney boxes (thread safe).

    A Whitney box is bad when at least one of its refined boxes is; the
    refined boxes are tested in octant order and testing stops at the first
    bad one.  Every verdict computed is kept for diagnostics.
    """

    def __init__(self, spec: DriftFieldSpec, eps, m=8, m_s=8):
        self.spec = spec
        self.eps = eps
        self.m = m
        self.m_s = m_s
        self._bad = {}
        self.verdicts = {}
        self._lock = threading.Lock()

    def verdicts_for(self, Q: DyadicCube, exhaustive=False):
        out = []
        for P in refine(whitney_box(Q)):
            key = (Q.generation, Q.index, P.octant_index)
            v = self.verdicts.get(key)
            if v is None:
                v = asa_test(P, self.spec, self.eps, m=self.m, m_s=self.m_s)
                with self._lock:
                    self.verdicts[key] = v
            out.append(v)
            if not v.good and not exhaustive:
                break
        return out

    def is_bad(self, Q: DyadicCube) -> bool:
        key = (Q.generation, Q.index)
        hit = self._bad.get(key)
        if hit is None:
            hit = any(not v.good for v in self.verdicts_for(Q))
            with self._lock:
                self._bad[key] = hit
        return hit

    @property
    def inconclusive(self):
        return sorted(k for k, v in self.verdicts.items() if v.inconclusive)

    @property
    def n_tested(self):
        return len(self.verdicts)


@dataclass(frozen=True)
class StoppingFamily:
    """One generation of maximal bad cubes, grouped by generation-1 root."""

    generation: int
    dim: int
    by_root: dict  # root index -> tuple of DyadicCube
    parents: dict = field(default_factory=dict)  # (k, index) -> parent cube

    @property
    def cubes(self):
        return [Q for j in sorted(self.by_root) for Q in self.by_root[j]]

    @property
    def empty(self):
        return not any(self.by_root.values())

    def __len__(self):
        return sum(len(v) for v in self.by_root.values())

    def shadow_fraction_exact(self) -> Fraction:
        """sigma(shadow) / sigma(circle) as an exact rational (2-D only: the
        arcs of one generation have equal length)."""
        if self.dim != 2:
            raise ValueError("exact shadow fractions are planar; use shadow_measure in 3-D")
        return sum((Fraction(1, n_cubes(2, Q.generation)) for Q in self.cubes), Fraction(0))

    def shadow_measure(self):
        return float(sum(Q.surface_measure for Q in self.cubes))

    def per_root_fraction(self):
        res = {}
        for j, cubes in sorted(self.by_root.items()):
            root = DyadicCube(self.dim, 1, j)
            res[j] = float(sum(Q.surface_measure for Q in cubes) / root.surface_measure)
        return res

    def box_rows(self, part="T"):
        return [carleson_box(Q).polar_row(part) for Q in self.cubes]

    def counts_by_cube_generation(self):
        out = {}
        for Q in self.cubes:
            out[Q.generation] = out.get(Q.generation, 0) + 1
        return dict(sorted(out.items()))


def _scan_below(start_cubes, grid, clf):
    """Coarse-to-fine scan for maximal bad cubes among the descendants given.

    ``start_cubes`` are the candidate tops; once a cube is selected its
    descendants are pruned.
    """
    selected = []
    frontier = list(start_cubes)
    while frontier:
        nxt = []
        for Q in frontier:
            if clf.is_bad(Q):
                selected.append(Q)
            elif Q.generation < grid.k_max:
                nxt.extend(Q.children())
        frontier = nxt
    return sorted(selected, key=lambda q: (q.generation, q.index))


def _run_roots(fn, roots, threads):
    if threads and threads > 1 and len(roots) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(fn, roots))
    else:
        results = [fn(j) for j in roots]
    return dict(zip(roots, results))


def extract_family_first(grid: DyadicGrid, spec: DriftFieldSpec, eps, classifier=None,
                         threads=1) -> StoppingFamily:
    clf = classifier or AsaClassifier(spec, eps)
    roots = list(range(n_cubes(grid.dim, 1)))
    by_root = _run_roots(lambda j: tuple(_scan_below([DyadicCube(grid.dim, 1, j)], grid, clf)),
                         roots, threads)
    return StoppingFamily(1, grid.dim, {j: c for j, c in by_root.items() if c})


def extract_family_next(prev: StoppingFamily, grid: DyadicGrid, spec: DriftFieldSpec, eps,
                        classifier=None, threads=1) -> StoppingFamily:
    """Maximal bad cubes strictly inside the S-regions of ``prev``'s boxes."""
    clf = classifier or AsaClassifier(spec, eps)

    def root_job(j):
        found = []
        parents = {}
        for Qp in prev.by_root.get(j, ()):
            if Qp.generation >= grid.k_max:
                continue
            for Q in _scan_below(Qp.children(), grid, clf):
                found.append(Q)
                parents[(Q.generation, Q.index)] = Qp
        found.sort(key=lambda q: (q.generation, q.index))
        return tuple(found), parents

    res = _run_roots(root_job, sorted(prev.by_root), threads)
    by_root = {j: c for j, (c, _) in res.items() if c}
    parents = {}
    for _, (_, par) in res.items():
        parents.update(par)
    return StoppingFamily(prev.generation + 1, grid.dim, by_root, parents)


def brute_force_families(grid: DyadicGrid, spec: DriftFieldSpec, eps, classifier=None):
    """Reference families from an exhaustive classification.

    Every Whitney box down to ``k_max`` is classified; family p is then the
    set of bad cubes with exactly p - 1 bad strict ancestors.
    """
    clf = classifier or AsaClassifier(spec, eps)
    depth = {}
    for k in range(1, grid.k_max + 1):
        for Q in grid.generation(k):
            par = Q.parent()
            above = 0 if par is None else depth[(par.generation, par.index)][0] + depth[(par.generation, par.index)][1]
            depth[(k, Q.index)] = (above, 1 if clf.is_bad(Q) else 0)
    fams = {}
    for (k, j), (above, bad) in depth.items():
        if bad:
            fams.setdefault(above + 1, []).append(DyadicCube(grid.dim, k, j))
    return {p: sorted(v, key=lambda q: (q.generation, q.index)) for p, v in sorted(fams.items())}


@dataclass
class SawtoothDomain:
    dim: int
    eta: float
    eps: float
    M: float
    k_max: int
    families: list
    n0: int
    shadow_fractions: list
    inconclusive: list = field(default_factory=list)
    drift: dict = field(default_factory=dict)

    @property
    def n_stop(self):
        return len(self.families)

    def omega(self, p):
        """Omega_p for 1 <= p <= N_stop; p = 0 is the whole ball."""
        if p == 0:
            return RemovedBoxDomain([], self.dim, label="B")
        return RemovedBoxDomain(self.families[p - 1].box_rows("T"), self.dim, label=f"Omega_{p}")

    def lam(self, p):
        return RemovedBoxDomain(self.families[p - 1].box_rows("S"), self.dim, label=f"Lambda_{p}")

    def final(self):
        return self.omega(self.n_stop)

    def level(self, name):
        """'final' / 'omega:p' / 'lambda:p'."""
        if name in ("final", "eta"):
            return self.final()
        kind, _, p = name.partition(":")
        p = int(p)
        if not 0 <= p <= self.n_stop or (kind == "lambda" and p == 0):
            raise ValueError(f"level {name!r} not available (N_stop = {self.n_stop})")
        return self.omega(p) if kind == "omega" else self.lam(p)

    def summary(self):
        return {"dim": self.dim, "eta": self.eta, "eps": self.eps, "M": self.M,
                "k_max": self.k_max, "N0": self.n0, "generations": self.n_stop,
                "shadow_fraction": ampleness_fraction(self),
                "per_generation_boxes": [len(f) for f in self.families],
                "per_generation_shadow": self.shadow_fractions,
                "inconclusive_boxes": [list(k) for k in self.inconclusive],
                "drift": self.drift}


def membership(x, dom: SawtoothDomain, level="final") -> bool:
    x = as_point(x)
    return dom.level(level).contains(x)


def ampleness_fraction(dom: SawtoothDomain) -> float:
    if dom.n_stop == 0:
        return 0.0
    fam = dom.families[-1]
    if dom.dim == 2:
        return float(fam.shadow_fraction_exact())
    return fam.shadow_measure() / (4.0 * math.pi)


def per_root_fractions(dom: SawtoothDomain):
    return {} if dom.n_stop == 0 else dom.families[-1].per_root_fraction()


def build_ample_sawtooth(spec: DriftFieldSpec, eps, eta, grid: DyadicGrid = None, k_max=6,
                         threads=1, classifier=None) -> SawtoothDomain:
    """Iterate the family extraction until the current shadow is at most eta.

    The last extracted family defines the final domain; its boundary shadow
    is the one tested against eta.  An empty next family while the shadow is
    still too large, or more than N0 generations, is a construction error.
    """
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    grid = grid or build_grid(spec.dim, k_max)
    if grid.dim != spec.dim:
        raise ValueError("grid and drift dimensions differ")
    M = spec.declared_M
    n0 = n0_bound(M, eps, eta, grid.dim - 1)
    clf = classifier or AsaClassifier(spec, eps)
    families, fractions = [], []
    fam = extract_family_first(grid, spec, eps, clf, threads)
    while not fam.empty:
        families.append(fam)
        frac = (float(fam.shadow_fraction_exact()) if grid.dim == 2
                else fam.shadow_measure() / (4.0 * math.pi))
        fractions.append(frac)
        if len(families) > n0:
            raise ConstructionError(f"{len(families)} generations exceed N0 = {n0}")
        if frac <= eta:
            break
        fam = extract_family_next(fam, grid, spec, eps, clf, threads)
        if fam.empty:
            raise ConstructionError(
                f"family {len(families) + 1} is empty while the shadow fraction {frac:.6g} exceeds eta = {eta}")
    return SawtoothDomain(grid.dim, eta, eps, M, grid.k_max, families, n0, fractions,
                          clf.inconclusive, spec.describe())


def from_families(dim, families, eta=1.0, eps=float("nan"), M=float("nan"), k_max=None):
    """Domain from explicit cube lists, one list per generation (for custom experiments)."""
    fams = []
    for p, cubes in enumerate(families, start=1):
        by_root = {}
        for Q in sorted(cubes, key=lambda q: (q.generation, q.index)):
            by_root.setdefault(Q.ancestor(1).index, []).append(Q)
        fams.append(StoppingFamily(p, dim, {j: tuple(v) for j, v in by_root.items()}))
    fr = [float(f.shadow_fraction_exact()) if dim == 2 else f.shadow_measure() / (4 * math.pi)
          for f in fams]
    kmax = k_max or max((Q.generation for f in fams for Q in f.cubes), default=1)
    n0 = n0_bound(M, eps, eta, dim - 1) if all(map(math.isfinite, (M, eps))) and eta < 1 else 0
    return SawtoothDomain(dim, eta, eps, M, kmax, fams, n0, fr)


# ------------------------------------------------------------- serialization


def write_sawtooth(dom: SawtoothDomain, path) -> None:
    """Tab-separated listing: generation, root, cube generation k, cube index."""
    path = Path(path)
    lines = ["# sawtooth " + json.dumps(dom.summary(), sort_keys=True),
             "generation\troot\tk\tindex"]
    for fam in dom.families:
        for j in sorted(fam.by_root):
            for Q in fam.by_root[j]:
                lines.append(f"{fam.generation}\t{j}\t{Q.generation}\t{Q.index}")
    path.write_text("\n".join(lines) + "\n")


def read_sawtooth(path) -> SawtoothDomain:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# sawtooth "):
        raise ValueError(f"{path}: not a sawtooth listing")
    meta = json.loads(text[0][len("# sawtooth "):])
    dim = meta["dim"]
    by_gen = {}
    for line in text[2:]:
        if not line.strip():
            continue
        p, j, k, idx = (int(t) for t in line.split("\t"))
        Q = DyadicCube(dim, k, idx)
        if Q.ancestor(1).index != j:
            raise ValueError(f"{path}: cube ({k}, {idx}) is not under root {j}")
        by_gen.setdefault(p, {}).setdefault(j, []).append(Q)
    fams = [StoppingFamily(p, dim, {j: tuple(v) for j, v in sorted(by_gen[p].items())})
            for p in sorted(by_gen)]
    return SawtoothDomain(dim, meta["eta"], meta["eps"], meta["M"], meta["k_max"], fams,
                          meta["N0"], meta["per_generation_shadow"],
                          [tuple(k) for k in meta.get("inconclusive_boxes", [])],
                          meta.get("drift", {}))
