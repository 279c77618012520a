"""Command-line front end: triangle | periods | build | sweep | verify.

Exit codes: 0 success, 1 invalid input, 2 solver failure, 3 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, RunConfig
from .conjugation import ConjugationError
from .export import (to_json, write_curves_csv, write_json, write_obj, write_ply)
from .hyperbolic import GeometryError, TriangleSpec, a_emb, a_max, layout_triangle
from .jenkins_serrin import flux_P1
from .meshing import MeshError
from .minimal_graph import SolverError
from .periods import (PeriodError, TriangleEvaluator, classify, evaluate_point, make_report)
from .surface import AssemblyError, DomainError

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3
SOLVER_ERRORS = (SolverError, PeriodError, ConjugationError, DomainError, AssemblyError, MeshError)
# the conjugate chain only closes up as a simple polygon for short truncations
BUILD_TRUNCATION = {"R": 2.0, "n_extra": 1.0}
SOLVE_TRUNCATION = {"R": 8.0, "n_extra": 10.0}


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors (exit 1), not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="knoids", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key = value file")
    common.add_argument("--phi", help="angle at p2 in radians (pi/k syntax allowed)")
    common.add_argument("--l", help="length of l2 (number or inf)")
    common.add_argument("--h", type=float)
    common.add_argument("--trunc-N", dest="trunc_N", type=float, help="N - b on l2")
    common.add_argument("--trunc-R", dest="trunc_R", type=float, help="cut-off distance of an ideal p1")
    common.add_argument("--tol-pde", dest="tol_pde", type=float)
    common.add_argument("--tol-p1", dest="tol_p1", type=float)
    common.add_argument("--tol-p2", dest="tol_p2", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output root (a config-hash directory is created inside)")
    common.add_argument("--json", action="store_true", help="print structured output")

    t = sub.add_parser("triangle", parents=[common], help="layout and closed-form thresholds")
    t.add_argument("--a", type=float)
    t.add_argument("--phi-grid", type=int, default=9, help="rows of the a_max / a_emb table")

    q = sub.add_parser("periods", parents=[common], help="P1, P2 and diagnostics at (a, phi)")
    q.add_argument("--a", type=float)
    q.add_argument("--b", type=float, help="evaluate P1 at this b instead of solving for it")

    b = sub.add_parser("build", parents=[common], help="solve the periods and assemble a surface")
    b.add_argument("--family", choices=["knoid", "saddle", "parabolic", "hyperbolic"])
    b.add_argument("--k", type=int)
    b.add_argument("--a", type=float, help="hyperbolic family: use this a instead of a target P2")
    b.add_argument("--surface-h", dest="surface_h", type=float)
    b.add_argument("--n-copies", dest="n_copies", type=int)
    b.add_argument("--format", dest="formats", help="comma list of obj, ply")
    b.add_argument("--no-disk", dest="disk", action="store_false", default=None)

    s = sub.add_parser("sweep", parents=[common], help="CSV of P1, P2 over a grid of (a, phi)")
    s.add_argument("--a-points", dest="a_points", type=int)
    s.add_argument("--phi-values", dest="phi_values", help="comma list of angles")
    s.add_argument("--workers", type=int)

    v = sub.add_parser("verify", parents=[common], help="run a verification suite")
    v.add_argument("--suite", default="acceptance", choices=["oracles", "lemmas", "acceptance"])
    return p


_RUN_KEYS = {f for f in RunConfig.__dataclass_fields__}


def _config(args) -> RunConfig:
    over = {k: v for k, v in vars(args).items() if k in _RUN_KEYS and v is not None}
    return cfgmod.load(args.config, over)


def _run_dir(cfg: RunConfig, command: str) -> Path:
    return Path(cfg.out) / f"{command}-{cfg.digest(command)}"


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


# ------------------------------------------------------------------ commands

def cmd_triangle(cfg: RunConfig, a: float | None, rows: int, as_json: bool) -> dict:
    phis = np.linspace(0.0, math.pi / 2, rows + 2)[1:-1]
    table = [{"phi": float(p), "a_max": a_max(float(p), cfg.l), "a_emb": a_emb(float(p), cfg.l)} for p in phis]
    out = {"phi": cfg.phi, "l": cfg.l, "a_max": a_max(cfg.phi, cfg.l), "a_emb": a_emb(cfg.phi, cfg.l),
           "table": table}
    if a is not None:
        pose = layout_triangle(TriangleSpec(a, cfg.phi, cfg.l))
        out["pose"] = {
            "p1": "ideal" if pose.spec.ideal else [pose.p1.x, pose.p1.y],
            "p2": [pose.p2.x, pose.p2.y], "p3": [pose.p3.x, pose.p3.y],
            "c": pose.c, "angles": [pose.angle1, pose.angle2, pose.angle3],
        }
    if as_json:
        _emit(to_json(out))
    else:
        lstr = "inf" if not math.isfinite(cfg.l) else f"{cfg.l:.6g}"
        _emit(f"phi = {cfg.phi:.12g}, l = {lstr}")
        _emit(f"a_max = {out['a_max']:.12g}")
        _emit(f"a_emb = {out['a_emb']:.12g}")
        if "pose" in out:
            ps = out["pose"]
            _emit(f"p1 = {ps['p1']}, p2 = {ps['p2']}, p3 = {ps['p3']}, c = {ps['c']}")
            _emit("angles (p1, p2, p3) = " + ", ".join(f"{x:.12g}" for x in ps["angles"]))
        _emit(f"{'phi':>10} {'a_max':>14} {'a_emb':>14}")
        for row in table:
            _emit(f"{row['phi']:10.6f} {row['a_max']:14.9f} {row['a_emb']:14.9f}")
    return out


def periods_report(cfg: RunConfig, a: float, b: float | None = None) -> dict:
    solver = cfg.solver(**SOLVE_TRUNCATION)
    if b is not None:
        ev = TriangleEvaluator(layout_triangle(TriangleSpec(a, cfg.phi, cfg.l)), solver)
        sol = ev.solve(b, warm=False)
        return {"a": a, "phi": cfg.phi, "l": cfg.l, "b": b, "P1": flux_P1(sol),
                "newton_residual": sol.residual, "nodes": sol.mesh.n_nodes}
    rep = make_report(evaluate_point(a, cfg.phi, cfg.l, solver), solver)
    return rep.to_dict()


def cmd_periods(cfg: RunConfig, as_json: bool) -> dict:
    if cfg.a is None:
        raise ConfigError("periods needs --a")
    out_dir = _run_dir(cfg, "periods")
    rep = periods_report(cfg, cfg.a, cfg.b)
    payload = {"report": rep, "config": cfg.to_dict()}
    _write_once(out_dir, {"report.json": lambda p: write_json(p, payload)})
    if as_json:
        _emit(to_json(payload))
    else:
        keys = ("a", "phi", "b", "P1", "P2", "x0", "y0", "theta0", "delta", "regime", "family", "embedded")
        for k in keys:
            if k in rep:
                _emit(f"{k:>9} = {rep[k]}")
        _emit(f"written to {out_dir}")
    return payload


def _write_once(out_dir: Path, writers: dict) -> bool:
    """Create out_dir and its files; an existing run directory is left untouched."""
    if out_dir.exists():
        return False
    tmp = out_dir.with_name(out_dir.name + ".partial")
    tmp.mkdir(parents=True, exist_ok=True)
    for name, w in writers.items():
        w(tmp / name)
    tmp.rename(out_dir)
    return True


def cmd_build(cfg: RunConfig, as_json: bool) -> dict:
    from .build import BuildOptions, build_surface
    cfg.validate_family()
    solver = cfg.solver(**BUILD_TRUNCATION)
    opts = BuildOptions(surface_h=cfg.surface_h, n_copies=cfg.n_copies,
                        hyperbolic_target=cfg.hyperbolic_target)
    k = cfg.k if cfg.family in ("knoid", "saddle") else None
    res = build_surface(cfg.family, cfg.phi, k, cfg.l, solver, a=cfg.a, options=opts)
    summary = res.summary()
    summary["config"] = cfg.to_dict()
    summary["solver"] = solver.to_dict()
    summary["files"] = {}
    surf = res.surface
    piece = res.piece
    p3 = np.column_stack([piece.mesh.points, piece.u])
    note = f"{cfg.family} phi={cfg.phi!r} k={k} a={res.report.a!r} b={res.report.b!r}"
    writers = {}
    for fmt in cfg.formats:
        if fmt == "obj":
            writers["surface.obj"] = lambda p: write_obj(p, surf.vertices, surf.faces, note)
            writers["piece.obj"] = lambda p: write_obj(p, p3, piece.mesh.triangles, note)
        else:
            writers["surface.ply"] = lambda p: write_ply(p, surf.vertices, surf.faces, cfg.disk,
                                                         surf.vertex_copy, note)
            writers["piece.ply"] = lambda p: write_ply(p, p3, piece.mesh.triangles, cfg.disk, None, note)
    writers["curves.csv"] = lambda p: write_curves_csv(p, res.report.evaluation.boundary)
    summary["files"] = sorted(list(writers) + ["report.json", "config.txt"])
    writers["report.json"] = lambda p: write_json(p, summary)
    writers["config.txt"] = lambda p: p.write_text(cfgmod.dump_text(cfg))
    out_dir = _run_dir(cfg, "build")
    fresh = _write_once(out_dir, writers)
    if as_json:
        _emit(to_json(summary))
    else:
        r = res.report
        c = res.curvature["piece"]
        _emit(f"family {cfg.family}: a = {r.a:.10g}, b = {r.b:.10g}, P2 = {r.P2:.10g}, regime {r.regime}")
        _emit(f"copies {surf.copies}, vertices {len(surf.vertices)}, faces {len(surf.faces)}")
        _emit(f"curvature per piece {c.per_piece:.6f}, total {c.total:.6f}"
              + (f", Gauss-Bonnet {c.formula:.6f}" if c.formula is not None else ""))
        if "translation" in surf.group:
            _emit(f"translation {surf.group['translation']}")
        _emit(f"embedded {res.checks['embedded']}, overlap {res.checks['reflection_overlap']:.3g}")
        _emit(("written to " if fresh else "already present: ") + str(out_dir))
    return summary


def _sweep_point(args):
    cfg, a, phi = args
    solver = cfg.solver(**SOLVE_TRUNCATION)
    row = {"a": a, "phi": phi, "b": "", "P1": "", "P2": "", "family": "", "flags": ""}
    try:
        ev = evaluate_point(a, phi, cfg.l, solver)
        rep = make_report(ev, solver)
        row.update(b=repr(rep.b), P1=repr(rep.P1), P2=repr(rep.P2),
                   family=classify(rep.P2, cfg.l), flags="; ".join(rep.diagnostics["flags"]))
    except SOLVER_ERRORS + (ValueError,) as exc:
        row["flags"] = f"error: {type(exc).__name__}: {exc}"
    return row


def sweep_rows(cfg: RunConfig) -> list[dict]:
    jobs = []
    for phi in cfg.phi_values:
        am = a_max(phi, cfg.l)
        for a in np.linspace(cfg.eps * am, (1 - cfg.eps) * am, cfg.a_points):
            jobs.append((cfg, float(a), float(phi)))
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            return list(pool.map(_sweep_point, jobs))
    return [_sweep_point(j) for j in jobs]


def cmd_sweep(cfg: RunConfig, as_json: bool) -> list[dict]:
    rows = sweep_rows(cfg)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["a", "phi", "b", "P1", "P2", "family", "flags"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "a": repr(r["a"]), "phi": repr(r["phi"])})
    text = buf.getvalue()
    out_dir = _run_dir(cfg, "sweep")
    _write_once(out_dir, {"sweep.csv": lambda p: p.write_text(text),
                          "config.txt": lambda p: p.write_text(cfgmod.dump_text(cfg))})
    _emit(to_json(rows) if as_json else text)
    return rows


def cmd_verify(cfg: RunConfig, suite: str, as_json: bool) -> bool:
    from .verify import run_suite
    checks = run_suite(suite, echo=None if as_json else _emit)
    ok = all(c.passed for c in checks)
    payload = {"suite": suite, "passed": ok, "checks": [c.to_dict() for c in checks]}
    if as_json:
        _emit(to_json(payload))
    else:
        _emit(f"{sum(c.passed for c in checks)}/{len(checks)} checks passed")
    if cfg.out:
        out = Path(cfg.out) / f"verify-{suite}"
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "verify.json", payload)
    return ok


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _config(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        if args.command == "triangle":
            cmd_triangle(cfg, args.a, args.phi_grid, args.json)
        elif args.command == "periods":
            cmd_periods(cfg, args.json)
        elif args.command == "build":
            cmd_build(cfg, args.json)
        elif args.command == "sweep":
            cmd_sweep(cfg, args.json)
        else:
            return EXIT_OK if cmd_verify(cfg, args.suite, args.json) else EXIT_VERIFY
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, GeometryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
