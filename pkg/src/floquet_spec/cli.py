"""Command-line front end: ``floquet-spec {bands,eigs,oracle,resolve,compare}``.

Windows, ``--lambda`` and all reported eigenvalues use the coordinates of
the operator as written in the spec file; normalization happens inside.
Exit codes: 0 success, 1 input error, 2 numerical failure.
"""
from __future__ import annotations

import os

# must precede the numpy import to take effect
_threads = os.environ.get("FLOQUET_SPEC_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.optimize import linear_sum_assignment

from floquet_spec import kernels
from floquet_spec.birman_schwinger import SCHEMA_VERSION, find_eigenvalues, make_branch
from floquet_spec.errors import FloquetSpecError, NumericalError, SeedOnSpectrum, SpecError
from floquet_spec.floquet import BandCurve, bands_to_csv, bands_to_json, band_structure
from floquet_spec.ode_core import DEFAULT_TOL, monodromy
from floquet_spec.operator_model import load_spec, normalize
from floquet_spec.oracle_fd import FDConfig, converged_eigenvalues
from floquet_spec.quadrature import QuadratureConfig
from floquet_spec.regions import Rectangle
from floquet_spec.resolvent import GridFunction, apply_resolvent, resolvent_residual

VERSION = "0.1.0"
COMMANDS = ("bands", "eigs", "oracle", "resolve", "compare")
INPUTS = {
    "gaussian": lambda t: np.exp(-t ** 2),
    "hermite": lambda t: t * np.exp(-t ** 2),
}


@dataclass
class RunConfig:
    """All knobs of a run.

    ``L`` and ``N`` are the truncation half-length and node count: for
    ``oracle``/``compare`` the finite-difference domain and grid size
    (defaults 10 and 400), for ``eigs``/``resolve`` the quadrature
    half-length and nodes per panel (defaults: decay-based ``L``, 8 nodes).
    """

    command: str = None
    spec_path: str = None
    window: str = None
    output: str = None
    format: str = "json"
    tol: float = DEFAULT_TOL
    delta: float = None
    L: float = None
    N: int = None
    theta_count: int = 256
    contour_nodes: int = 128
    lam: str = None
    seed: str = None
    input: str = "gaussian"

    @classmethod
    def from_mapping(cls, doc) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = sorted(set(doc) - known)
        if extra:
            raise SpecError(f"unknown config key(s): {', '.join(extra)}", extra[0])
        return cls(**doc)

    def validate(self):
        if self.command not in COMMANDS:
            raise SpecError(f"unknown command {self.command!r}", "command")
        if not self.spec_path:
            raise SpecError("a spec file is required", "spec_path")
        if self.format not in ("json", "csv"):
            raise SpecError(f"format must be json or csv, got {self.format!r}", "format")
        if self.command in ("bands", "eigs", "compare") and not self.window:
            raise SpecError("--window is required", "window")
        if self.command == "resolve" and self.lam is None:
            raise SpecError("--lambda is required", "lambda")
        if self.input not in INPUTS:
            raise SpecError(f"input must be one of {sorted(INPUTS)}", "input")
        for name in ("theta_count", "contour_nodes"):
            if int(getattr(self, name)) < 4:
                raise SpecError("must be at least 4", name)
        return self

    def knobs(self) -> dict:
        d = asdict(self)
        d.pop("output")
        return d


def _complex(text, name) -> complex:
    try:
        parts = [float(x) for x in str(text).replace(" ", "").split(",")]
    except ValueError:
        try:
            return complex(str(text).replace(" ", ""))
        except ValueError:
            raise SpecError(f"cannot parse {text!r} as a complex number", name) from None
    if len(parts) == 1:
        return complex(parts[0])
    if len(parts) == 2:
        return complex(parts[0], parts[1])
    raise SpecError(f"expected 're,im', got {text!r}", name)


def _window(cfg) -> Rectangle:
    try:
        return Rectangle.parse(cfg.window)
    except SpecError:
        raise
    except ValueError as exc:
        raise SpecError(str(exc), "window") from None


def _metadata(cfg, spec) -> dict:
    return {"command": cfg.command, "knobs": cfg.knobs(), "spec": spec.to_dict(),
            "schema_version": SCHEMA_VERSION, "version": VERSION, "backend": kernels.BACKEND}


def _header(meta) -> str:
    return "".join(f"# {k}: {json.dumps(meta[k], sort_keys=True)}\n" for k in sorted(meta))


def _emit(cfg, text: str):
    if cfg.output:
        path = f"{cfg.output}.{cfg.format}"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        return path
    sys.stdout.write(text)
    return None


def _note(cfg, msg: str):
    print(msg, file=sys.stdout if cfg.output else sys.stderr)


def _quad(cfg) -> QuadratureConfig:
    kw = {}
    if cfg.L is not None:
        kw["L"] = float(cfg.L)
    if cfg.N is not None:
        kw["nodes_per_panel"] = int(cfg.N)
    return QuadratureConfig(**kw)


def _fd(cfg) -> FDConfig:
    return FDConfig(L=10.0 if cfg.L is None else float(cfg.L), N=400 if cfg.N is None else int(cfg.N))


# --- commands ----------------------------------------------------------------

def cmd_bands(cfg):
    raw = load_spec(cfg.spec_path)
    spec, lmap = normalize(raw)
    window = _window(cfg)
    curves = band_structure(spec, lmap.rect_to_normalized(window), int(cfg.theta_count), tol=cfg.tol)
    curves = [BandCurve(c.theta_grid, lmap.to_raw(np.asarray(c.points)), c.residuals, c.branch_id,
                        c.termination) for c in curves]
    meta = _metadata(cfg, raw)
    text = bands_to_json(curves, meta) + "\n" if cfg.format == "json" else bands_to_csv(curves, meta)
    _emit(cfg, text)
    _note(cfg, f"{len(curves)} band curve(s)")
    return 0


def _auto_branch(cfg, spec, lmap, region):
    """Branch from ``--seed`` or from the region corner farthest from the bands."""
    if cfg.seed is not None:
        return make_branch(spec, lmap.to_normalized(_complex(cfg.seed, "seed")), cfg.delta, tol=cfg.tol)
    best = None
    periodic = spec.periodic_part()
    for z in region.corners:
        marg = monodromy(periodic, z, cfg.tol).margin
        if best is None or marg > best[0] + 1e-12:
            best = (marg, z)
    try:
        return make_branch(spec, best[1], cfg.delta, tol=cfg.tol)
    except SeedOnSpectrum as exc:
        raise SeedOnSpectrum(exc.seed, exc.margin) from None


def _eigs(cfg):
    raw = load_spec(cfg.spec_path)
    spec, lmap = normalize(raw)
    region = lmap.rect_to_normalized(_window(cfg))
    branch = _auto_branch(cfg, spec, lmap, region)
    rep = find_eigenvalues(spec, branch, region, int(cfg.contour_nodes), _quad(cfg), lambda_map=lmap,
                           tol=cfg.tol)
    rep.metadata = _metadata(cfg, raw)
    return raw, rep


def cmd_eigs(cfg):
    _, rep = _eigs(cfg)
    text = rep.to_json() + "\n" if cfg.format == "json" else rep.to_csv()
    _emit(cfg, text)
    _note(cfg, f"winding {rep.winding}, {len(rep.roots)} root(s)")
    for r in rep.roots:
        _note(cfg, f"  lambda = {r.lam.real:.12g} {r.lam.imag:+.12g}i  residual {r.residual:.3e}"
                   f"  stable {r.stable}")
    for c in rep.clusters:
        _note(cfg, f"  unresolved cluster with winding {c[1]}")
    return 0


def cmd_oracle(cfg):
    raw = load_spec(cfg.spec_path)
    fd = _fd(cfg)
    window = _window(cfg) if cfg.window else None
    vals = converged_eigenvalues(raw, fd, window=window)
    meta = _metadata(cfg, raw)
    if cfg.format == "json":
        doc = {"schema_version": SCHEMA_VERSION, "metadata": meta, "L": fd.L, "N": fd.N,
               "eigenvalues": [{"re": z.real, "im": z.imag} for z in vals]}
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        buf.write(_header(meta))
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("re", "im", "L", "N"))
        for z in vals:
            w.writerow((repr(z.real), repr(z.imag), repr(fd.L), fd.N))
        text = buf.getvalue()
    _emit(cfg, text)
    _note(cfg, f"{len(vals)} converged eigenvalue(s)")
    return 0


def cmd_resolve(cfg):
    raw = load_spec(cfg.spec_path)
    spec, lmap = normalize(raw)
    lam_raw = _complex(cfg.lam, "lambda")
    lam = complex(lmap.to_normalized(lam_raw))
    quad = _quad(cfg)
    if quad.L is None:
        quad = quad.with_(L=8.0)
    v = GridFunction.from_function(INPUTS[cfg.input], quad, spec)
    u = apply_resolvent(spec, lam, v, quad, tol=cfg.tol)
    res = resolvent_residual(spec, lam, v, u, quad)
    # (H_raw - lam_raw) = c (H - lam) for the leading coefficient c
    vals = np.asarray(u.values) / lmap.scale
    meta = _metadata(cfg, raw)
    meta["residual"] = res
    if cfg.format == "json":
        doc = {"schema_version": SCHEMA_VERSION, "metadata": meta, "lambda": {"re": lam_raw.real,
               "im": lam_raw.imag}, "t": [float(x) for x in u.grid],
               "re": [float(z.real) for z in vals], "im": [float(z.imag) for z in vals]}
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        buf.write(_header(meta))
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t", "re", "im"))
        for t, z in zip(u.grid, vals):
            w.writerow((repr(float(t)), repr(float(z.real)), repr(float(z.imag))))
        text = buf.getvalue()
    _emit(cfg, text)
    _note(cfg, f"resolvent residual {res:.3e}")
    return 0


def pair_roots(bs, fd, tol: float = 1e-3):
    """Optimal pairing of two root lists; rows ``(bs, fd, distance, matched)``."""
    bs, fd = list(bs), list(fd)
    rows, used_b, used_f = [], set(), set()
    if bs and fd:
        cost = np.abs(np.subtract.outer(np.array(bs), np.array(fd)))
        r, c = linear_sum_assignment(cost)
        for i, j in zip(r, c):
            rows.append((bs[i], fd[j], float(cost[i, j]), bool(cost[i, j] <= tol)))
            used_b.add(i)
            used_f.add(j)
    rows += [(z, None, None, False) for i, z in enumerate(bs) if i not in used_b]
    rows += [(None, z, None, False) for j, z in enumerate(fd) if j not in used_f]
    key = lambda row: ((row[0] if row[0] is not None else row[1]).real,
                       (row[0] if row[0] is not None else row[1]).imag)
    return sorted(rows, key=key)


def cmd_compare(cfg):
    raw, rep = _eigs(cfg)
    bs = [r.lam for r in rep.roots if r.stable and not r.on_spectrum]
    fd = converged_eigenvalues(raw, _fd(cfg), window=_window(cfg))
    rows = pair_roots(bs, fd)
    meta = rep.metadata
    matched = [r[2] for r in rows if r[3]]
    worst = max(matched) if matched else None
    if cfg.format == "json":
        doc = {"schema_version": SCHEMA_VERSION, "metadata": meta, "max_matched_distance": worst,
               "pairs": [{"re_bs": None if b is None else b.real, "im_bs": None if b is None else b.imag,
                          "re_fd": None if f is None else f.real, "im_fd": None if f is None else f.imag,
                          "distance": d, "matched": m} for b, f, d, m in rows]}
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        buf.write(_header(meta))
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("re_bs", "im_bs", "re_fd", "im_fd", "distance", "matched"))
        fmt = lambda x: "" if x is None else repr(float(x))
        for b, f, d, m in rows:
            w.writerow((fmt(None if b is None else b.real), fmt(None if b is None else b.imag),
                        fmt(None if f is None else f.real), fmt(None if f is None else f.imag),
                        fmt(d), int(m)))
        text = buf.getvalue()
    _emit(cfg, text)
    _note(cfg, f"{len(matched)} matched pair(s), max matched distance "
               f"{'n/a' if worst is None else format(worst, '.3e')}")
    return 0


HANDLERS = {"bands": cmd_bands, "eigs": cmd_eigs, "oracle": cmd_oracle, "resolve": cmd_resolve,
            "compare": cmd_compare}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="floquet-spec", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--spec", dest="spec_path", help="operator spec JSON file")
        s.add_argument("--config", help="JSON file with RunConfig keys (flags override)")
        s.add_argument("--window", help='rectangle "re0,re1,im0,im1"')
        s.add_argument("--out", dest="output", help="output path prefix (default: stdout)")
        s.add_argument("--format", choices=("json", "csv"))
        s.add_argument("--tol", type=float, help="ODE tolerance (default 1e-12)")
        s.add_argument("--delta", type=float, help="continuation shift (default tau/2)")
        s.add_argument("--L", dest="L", type=float, help="truncation half-length")
        s.add_argument("--N", dest="N", type=int, help="FD grid size or quadrature nodes per panel")
        s.add_argument("--theta-count", dest="theta_count", type=int)
        s.add_argument("--contour-nodes", dest="contour_nodes", type=int)
        if name in ("eigs", "compare"):
            s.add_argument("--seed", help='branch seed "re,im" (default: best region corner)')
        if name == "resolve":
            s.add_argument("--lambda", dest="lam", help='spectral parameter "re,im"')
            s.add_argument("--input", choices=sorted(INPUTS), help="right-hand side (default gaussian)")
    return p


def make_config(args) -> RunConfig:
    doc = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SpecError(f"line {exc.lineno}: {exc.msg}", "config") from None
        if not isinstance(doc, dict):
            raise SpecError("config must be a JSON object", "config")
    cfg = RunConfig.from_mapping(doc)
    for key, val in vars(args).items():
        if key != "config" and val is not None:
            setattr(cfg, key, val)
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command is None:
        build_parser().print_usage(sys.stderr)
        return 1
    try:
        cfg = make_config(args)
        return HANDLERS[cfg.command](cfg)
    except SeedOnSpectrum as exc:
        print(f"error: {exc}; no off-band seed in the region, try enlarging it or pass --seed",
              file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (SpecError, FloquetSpecError, OSError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
