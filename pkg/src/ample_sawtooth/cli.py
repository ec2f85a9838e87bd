"""Command-line entry point: ``ample-sawtooth <command> [flags]``.

Exit codes: 0 ok (including inconclusive verdicts), 2 input error,
3 construction violation, 4 claim violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import checks as C
from .drift import (carleson_norm, cone_singular, load_grid_field, pointwise_bound_check, uniform_small,
                    zero_drift)
from .dyadic import DyadicCube, build_grid, verify_grid_properties, write_grid
from .errors import (AmpleSawtoothError, ConstructionError, DomainMembershipError, DriftBoundError,
                     PreconditionError, SchemeError, UnsupportedError)
from .geometry import Ball
from .measure import DyadicPartition, SawtoothPartition, WalkerConfig, estimate_measure
from .sawtooth import AsaClassifier, build_ample_sawtooth, read_sawtooth, write_sawtooth
from .whitney import partition_report, refine, whitney_boxes

log = logging.getLogger("ample_sawtooth")

EXIT_OK, EXIT_INPUT, EXIT_CONSTRUCTION, EXIT_CLAIM = 0, 2, 3, 4
ALL_CHECKS = ("bourgain", "claim1", "holder", "criterion", "bmo", "weak-ainfty")
OUT_ENV = "AMPLE_SAWTOOTH_OUT"


class InputError(ValueError):
    pass


@dataclass
class RunConfig:
    dim: int = 2
    k_max: int = 6
    drift: str = "zero"
    eps: float = 0.1
    eta: float = 0.1
    M: float = 1.0
    walkers: int = 20_000
    seed: int = 0
    threads: int = 1
    rho: float = 0.1
    dabs: float = 1e-4
    checks: list = field(default_factory=lambda: list(ALL_CHECKS))
    out: str = ""
    sawtooth: str = ""
    pole: list = field(default_factory=lambda: [0.5, 0.0])
    cell_generation: int = 3
    h: float = 0.02
    pole_angle: float = 0.3

    def validate(self):
        if self.dim not in (2, 3):
            raise InputError("dim must be 2 or 3")
        top = 12 if self.dim == 2 else 6
        if not 1 <= self.k_max <= top:
            raise InputError(f"k_max must lie in [1, {top}] for dim {self.dim}")
        for name in ("eps", "eta"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise InputError(f"{name} must lie in (0, 1)")
        if not self.M > 0:
            raise InputError("M must be positive")
        if self.walkers < 1 or self.threads < 1:
            raise InputError("walkers and threads must be positive")
        if not 0 <= self.seed < 2**63:
            raise InputError("seed must be a nonnegative 63-bit integer")
        if not 0 < self.rho <= 0.5 or not self.dabs > 0:
            raise InputError("rho must lie in (0, 1/2] and dabs must be positive")
        if not 0 < self.h < 0.25:
            raise InputError("h must lie in (0, 1/4)")
        if not 1 <= self.cell_generation <= self.k_max + 4:
            raise InputError("cell_generation out of range")
        unknown = set(self.checks) - set(ALL_CHECKS)
        if unknown:
            raise InputError(f"unknown checks: {sorted(unknown)}")
        if len(self.pole) != self.dim:
            raise InputError("pole dimension differs from dim")
        return self

    def walker(self):
        return WalkerConfig(rho=self.rho, dabs=self.dabs, seed=self.seed, threads=self.threads)

    def out_dir(self):
        return Path(self.out or os.environ.get(OUT_ENV) or "ample_out")


def parse_drift(text, dim, M):
    """zero | uniform:EPS_HAT | cone:AMP:k,j[;k,j...] | grid:PATH."""
    kind, _, rest = text.partition(":")
    try:
        if kind == "zero":
            return zero_drift(dim, M)
        if kind == "uniform":
            return uniform_small(float(rest), dim, M)
        if kind == "cone":
            amp, _, targets = rest.partition(":")
            cubes = [DyadicCube(dim, *map(int, t.split(","))) for t in targets.split(";") if t]
            if not cubes:
                raise InputError("cone drift needs at least one target cube k,j")
            return cone_singular(cubes, float(amp), M)
        if kind == "grid":
            if dim != 2:
                raise InputError("grid-sampled drifts are planar")
            return load_grid_field(rest, M)
    except (TypeError, IndexError) as e:
        raise InputError(f"malformed drift {text!r}: {e}") from e
    raise InputError(f"unknown drift {text!r}")


def _add_common(p):
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--dim", type=int)
    p.add_argument("--kmax", dest="k_max", type=int)
    p.add_argument("--drift")
    p.add_argument("--eps", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--m-bound", dest="M", type=float)
    p.add_argument("--walkers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    ap = argparse.ArgumentParser(prog="ample-sawtooth", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in [("decompose", "build the dyadic grid and Whitney boxes, check their properties"),
                           ("classify-drift", "pointwise bound, Carleson norm and box classification"),
                           ("build-sawtooth", "run the stopping-time construction"),
                           ("estimate-measure", "Monte Carlo exit distribution from a pole"),
                           ("verify-claims", "run the numerical claim checks"),
                           ("constants", "print l0, c, tau_k and N0")]:
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        if name in ("estimate-measure", "verify-claims"):
            p.add_argument("--sawtooth", help="sawtooth artifact (default: OUT/sawtooth.tsv)")
        if name == "estimate-measure":
            p.add_argument("--pole", type=float, nargs="+")
            p.add_argument("--cell-generation", dest="cell_generation", type=int)
        if name == "verify-claims":
            p.add_argument("--checks", type=lambda s: [c for c in s.split(",") if c])
            p.add_argument("--h", type=float)
    return ap


def resolve_config(args) -> RunConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"cannot read config {args.config}: {e}") from e
    names = {f.name for f in fields(RunConfig)}
    bad = set(data) - names
    if bad:
        raise InputError(f"unknown config keys: {sorted(bad)}")
    for n in names:
        v = getattr(args, n, None)
        if v is not None:
            data[n] = v
    try:
        cfg = RunConfig(**data)
    except TypeError as e:
        raise InputError(str(e)) from e
    return cfg.validate()


def _write_config(cfg, out):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------------ commands


def cmd_decompose(cfg: RunConfig) -> int:
    out = cfg.out_dir()
    _write_config(cfg, out)
    grid = build_grid(cfg.dim, cfg.k_max)
    n = write_grid(grid, out / "grid.tsv")
    rep = verify_grid_properties(grid)
    lines = rep.lines()
    ok = rep.passed
    if cfg.dim == 2:
        pr = partition_report(grid)
        lines.append("whitney\t" + " ".join(f"{k}={v}" for k, v in sorted(pr.items())))
        ok &= pr["overlapping_pairs"] == 0 and pr["refined_inconsistencies"] == 0
    rows = ["k\tindex\tr_lo\tr_hi\tvolume"]
    for U in whitney_boxes(grid):
        lo, hi = U.radial_interval
        rows.append(f"{U.cube.generation}\t{U.cube.index}\t{lo:.17g}\t{hi:.17g}\t{U.volume:.17g}")
    (out / "whitney.tsv").write_text("\n".join(rows) + "\n")
    (out / "properties.txt").write_text("\n".join(lines) + "\n")
    print(f"{n} cells written to {out / 'grid.tsv'}; properties {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CONSTRUCTION


def cmd_classify_drift(cfg: RunConfig) -> int:
    out = cfg.out_dir()
    _write_config(cfg, out)
    spec = parse_drift(cfg.drift, cfg.dim, cfg.M)
    grid = build_grid(cfg.dim, cfg.k_max)
    bc = pointwise_bound_check(spec)
    norm = carleson_norm(spec, grid)
    clf = AsaClassifier(spec, cfg.eps)
    rows = ["k\tindex\toctant\tvalue\terror\tthreshold\tverdict"]
    n_bad = 0
    for U in whitney_boxes(grid):
        for P, v in zip(refine(U), clf.verdicts_for(U.cube, exhaustive=True)):
            n_bad += not v.good
            rows.append(f"{U.cube.generation}\t{U.cube.index}\t{P.octant_index}\t{v.integral_value:.12g}\t"
                        f"{v.quadrature_error_bound:.12g}\t{v.threshold:.12g}\t{v.verdict}")
    (out / "classification.tsv").write_text("\n".join(rows) + "\n")
    summary = {"drift": spec.describe(), "pointwise_ratio": bc.worst_ratio, "carleson_norm": norm.value,
               "carleson_argmax": [norm.argmax_center.tolist(), norm.argmax_radius],
               "carleson_delta_cut": norm.lattice.delta_cut, "refined_boxes": clf.n_tested, "bad": n_bad,
               "inconclusive": [list(k) for k in clf.inconclusive]}
    (out / "drift_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"pointwise |B| delta / M = {bc.worst_ratio:.4g}; Carleson norm {norm.value:.4g}; "
          f"{n_bad} of {clf.n_tested} refined boxes bad")
    return EXIT_OK


def cmd_build_sawtooth(cfg: RunConfig) -> int:
    out = cfg.out_dir()
    _write_config(cfg, out)
    spec = parse_drift(cfg.drift, cfg.dim, cfg.M)
    dom = build_ample_sawtooth(spec, cfg.eps, cfg.eta, k_max=cfg.k_max, threads=cfg.threads)
    write_sawtooth(dom, out / "sawtooth.tsv")
    s = dom.summary()
    s["config"] = asdict(cfg)
    (out / "sawtooth_summary.json").write_text(json.dumps(s, indent=2, sort_keys=True) + "\n")
    print(f"{dom.n_stop} generation{'s' if dom.n_stop != 1 else ''}, fraction {s['shadow_fraction']:.6g} "
          f"<= eta={cfg.eta}; N0 = {dom.n0}; boxes per generation {s['per_generation_boxes']}")
    if dom.inconclusive:
        print(f"{len(dom.inconclusive)} inconclusive refined boxes (classified bad)", file=sys.stderr)
        return EXIT_CONSTRUCTION
    return EXIT_OK


def _load_sawtooth(cfg: RunConfig, required):
    path = Path(cfg.sawtooth) if cfg.sawtooth else cfg.out_dir() / "sawtooth.tsv"
    if not path.exists():
        if required:
            raise InputError(f"sawtooth artifact {path} not found; run build-sawtooth first")
        return None
    return read_sawtooth(path)


def cmd_estimate_measure(cfg: RunConfig) -> int:
    out = cfg.out_dir()
    _write_config(cfg, out)
    spec = parse_drift(cfg.drift, cfg.dim, cfg.M)
    saw = _load_sawtooth(cfg, required=bool(cfg.sawtooth))
    if saw is not None and saw.n_stop:
        dom = saw.final()
        part = SawtoothPartition(dom, cfg.cell_generation)
    else:
        dom = Ball(np.zeros(cfg.dim), 1.0)
        part = DyadicPartition(cfg.dim, cfg.cell_generation)
    est = estimate_measure(cfg.pole, dom, spec, part, cfg.walkers, cfg.walker())
    est.config["run"] = asdict(cfg)
    est.to_tsv(out / "measure.tsv")
    print(f"{est.completed} of {est.walkers} walkers absorbed; escaped fraction {est.escaped_fraction:.3g}")
    return EXIT_OK


def _run_check(name, cfg, spec, saw):
    wc = cfg.walker()
    n = cfg.walkers
    if name == "bourgain":
        return C.bourgain_sweep(saw.final() if saw.n_stop else Ball(np.zeros(2), 1.0), spec,
                                angle=cfg.pole_angle, n_walkers=n, cfg=wc, eps=cfg.eps)
    if name == "claim1":
        return C.claim1_sweep(saw, spec, angle=cfg.pole_angle, n_walkers=n, cfg=wc)
    if name == "holder":
        return C.holder_exponent_fit(spec=spec, h=min(cfg.h, 0.02))
    if name == "criterion":
        return C.criterion_scan(saw, spec, n_walkers=n, cfg=wc, seed=cfg.seed)
    if name == "bmo":
        return C.bmo_report(spec, np.cos, hs=(2 * cfg.h, cfg.h), oracle_grad_sq_one=spec.family == "zero")
    if name == "weak-ainfty":
        balls = [(0.0, 0.25), (2.0, 0.125), (4.0, 0.0625)]
        return C.weak_ainfty_fit(C.corkscrew_estimates(spec, balls, n_walkers=n, cfg=wc), seed=cfg.seed)
    raise InputError(name)


def cmd_verify_claims(cfg: RunConfig) -> int:
    out = cfg.out_dir()
    saw = _load_sawtooth(cfg, required=True)
    spec = parse_drift(cfg.drift, cfg.dim, cfg.M)
    if saw.dim != 2:
        raise InputError("claim checks are planar")
    rdir = out / "claims"
    rdir.mkdir(parents=True, exist_ok=True)
    _write_config(cfg, rdir)
    lines = [f"{'check':<12} {'verdict':<13} key constants"]
    verdicts = []
    for name in cfg.checks:
        try:
            rep = _run_check(name, cfg, spec, saw)
        except (UnsupportedError, PreconditionError, SchemeError, DomainMembershipError) as e:
            rep = C.ClaimReport(name, {"drift": spec.describe()}, {}, C.INCONCLUSIVE, ["reason"],
                                [{"reason": str(e)}], [f"not run: {e}"])
        # paths stay out of the tables so reruns into another directory compare byte for byte
        rep.params["run"] = {k: v for k, v in asdict(cfg).items() if k not in ("out", "sawtooth")}
        stem = name.replace("-", "_")
        rep.write(rdir, stem)
        if name == "holder" and rep.rows and "fit" in rep.rows[0]:
            C.holder_plot(rep, rdir / f"{stem}.svg")
        if name == "weak-ainfty" and rep.rows and "sigma_ratio" in rep.rows[0]:
            C.weak_ainfty_plot(rep, rdir / f"{stem}.svg")
        verdicts.append(rep.verdict)
        key = ", ".join(f"{k}={C._fmt(v)}" for k, v in list(rep.constants.items())[:3]
                        if not isinstance(v, (dict, list, tuple)))
        lines.append(f"{name:<12} {rep.verdict:<13} {key}")
        if rep.verdict == C.INCONCLUSIVE:
            log.warning("%s: inconclusive", name)
    summary = "\n".join(lines) + "\n"
    (rdir / "summary.txt").write_text(summary)
    print(summary, end="")
    return EXIT_CLAIM if C.VIOLATED in verdicts else EXIT_OK


def cmd_constants(cfg: RunConfig) -> int:
    spec = zero_drift(cfg.dim, cfg.M)
    table = C.constants_table(C.OperatorSpec(spec, cfg.eps, cfg.eta, cfg.k_max))
    text = table.to_tsv()
    if cfg.out or os.environ.get(OUT_ENV):
        out = cfg.out_dir()
        _write_config(cfg, out)
        (out / "constants.tsv").write_text(text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {"decompose": cmd_decompose, "classify-drift": cmd_classify_drift,
            "build-sawtooth": cmd_build_sawtooth, "estimate-measure": cmd_estimate_measure,
            "verify-claims": cmd_verify_claims, "constants": cmd_constants}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (InputError, DriftBoundError, DomainMembershipError, PreconditionError, UnsupportedError,
            FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (ConstructionError, SchemeError) as e:
        print(f"construction violation: {e}", file=sys.stderr)
        return EXIT_CONSTRUCTION
    except (ValueError, AmpleSawtoothError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
