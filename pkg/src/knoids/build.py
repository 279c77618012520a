"""End-to-end construction of one surface: periods, conjugate piece, assembly."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .hyperbolic import INF, a_emb, a_max, dist_array
from .periods import (PeriodError, PeriodReport, SolverConfig, evaluate_point, find_hyperbolic,
                      make_report, solve_parabolic, solve_second_period)
from .surface import (AssemblyError, ConjDomain, ConjPiece, CurvatureReport, SurfaceMesh,
                      build_conj_domain, generators, invariance_defect, mirror_defects,
                      reflect_and_assemble, reflection_overlap, solve_conjugate_graph,
                      total_curvature, translation_defect)

FAMILIES = ("knoid", "saddle", "parabolic", "hyperbolic")


@dataclass(frozen=True)
class BuildOptions:
    surface_h: float = 0.1        # mesh size of the conjugate piece
    n_copies: int = 4             # translates emitted for the infinity-noids
    snap_tol: float = 1e-6
    residual_tol: float = 1e-3    # refuse to assemble above this P2 / height residual
    hyperbolic_target: float = 1.5


@dataclass
class BuildResult:
    family: str
    k: int | None
    report: PeriodReport
    domain: ConjDomain
    piece: ConjPiece
    surface: SurfaceMesh
    curvature: dict
    checks: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "family": self.family,
            "k": self.k,
            "periods": self.report.to_dict(),
            "curvature": {n: c.to_dict() for n, c in self.curvature.items()},
            "checks": self.checks,
            "group": self.surface.group,
            "domain": {"truncation": self.domain.truncation, "signed_area": self.domain.signed_area,
                       "snaps": self.domain.snaps, "mirror_heights": self.domain.mirror_heights,
                       "arcs": [t for t, _, _ in self.domain.arcs]},
            "piece": {"nodes": self.piece.mesh.n_nodes, "triangles": int(len(self.piece.mesh.triangles)),
                      "residual": self.piece.residual, "iterations": self.piece.iterations},
        }


def period_report(family: str, phi: float, k: int | None = None, l: float = INF,
                  config: SolverConfig = SolverConfig(), a: float | None = None,
                  options: BuildOptions = BuildOptions()) -> PeriodReport:
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    if family == "knoid":
        if math.isfinite(l):
            raise ValueError("knoid family needs l = inf")
        return solve_second_period(phi, k, l, config)
    if family == "saddle":
        if not math.isfinite(l):
            raise ValueError("saddle family needs a finite l")
        return solve_second_period(phi, k, l, config)
    if family == "parabolic":
        return solve_parabolic(phi, l, config)
    if a is not None:
        ev = evaluate_point(a, phi, l, config)
        rep = make_report(ev, config)
        if not rep.P2 > 1:
            raise PeriodError(f"P2 = {rep.P2:.6g} at a = {a:.6g} is not hyperbolic")
        return rep
    return find_hyperbolic(phi, options.hyperbolic_target, l, config)


def build_surface(family: str, phi: float, k: int | None = None, l: float = INF,
                  config: SolverConfig = SolverConfig(), a: float | None = None,
                  options: BuildOptions = BuildOptions()) -> BuildResult:
    rep = period_report(family, phi, k, l, config, a, options)
    ev = rep.evaluation or evaluate_point(rep.a, phi, l, config, hint=rep.b)
    cb = ev.boundary
    mode = family
    domain = build_conj_domain(cb, mode, k=k, l=l)
    piece = solve_conjugate_graph(domain, h=options.surface_h, seed=config.seed)
    residuals = {"height": cb.heights["v3"] - cb.heights["v2"]}
    if family in ("knoid", "saddle"):
        residuals["P2"] = cb.P2 - math.cos(math.pi / k)
    elif family == "parabolic":
        residuals["P2"] = cb.P2 - 1.0
    surface = reflect_and_assemble(piece, k=k, mode=mode, l=l, n_copies=options.n_copies,
                                   snap_tol=options.snap_tol, period_residuals=residuals,
                                   residual_tol=options.residual_tol)
    copies = surface.copies
    if family == "knoid":
        gkm = dict(genus=1, ends=k, m=k)
    else:
        gkm = {}
    curv = {
        "piece": total_curvature(ev.sol, copies=copies, **gkm),
        "conjugate": total_curvature(piece, copies=copies, boundary="mirror", **gkm),
    }
    gens = generators(domain, l)
    checks = {
        "copies": copies,
        "expected_copies": 4 * k if k else 4 * options.n_copies,
        "invariance": {n: invariance_defect(surface, g) for n, g in gens.items()
                       if n in ("A", "B", "C") and (family in ("knoid", "saddle") or n == "C")},
        "mirror_defects": mirror_defects(piece),
        "reflection_overlap": reflection_overlap(domain),
        "a_emb": a_emb(phi, l),
        "a_max": a_max(phi, l),
        "embedded": bool(rep.a >= a_emb(phi, l)),
        "conjugate_residual": piece.residual,
    }
    if family == "saddle":
        checks["translation_defect"] = translation_defect(surface, gens["C"], gens["D"], -2.0 * l)
    if family in ("parabolic", "hyperbolic"):
        # the generator B is not a symmetry of a finite stack of translates;
        # check the translation group element instead on the interior copies
        checks["invariance"]["BA"] = _interior_translation_defect(surface, gens)
    return BuildResult(family, k, rep, domain, piece, surface, curv, checks)


def _interior_translation_defect(surface: SurfaceMesh, gens: dict) -> float:
    """BA maps every copy except the last translate into the surface."""
    S = gens["B"].compose(gens["A"])
    shift = np.asarray(surface.group["shifts"])
    keep = shift[surface.vertex_copy] < shift.max()
    img = S.apply(surface.vertices[keep])
    _, idx = cKDTree(surface.vertices).query(img)
    near = surface.vertices[idx]
    return float(np.max(np.hypot(dist_array(img[:, :2], near[:, :2]), img[:, 2] - near[:, 2])))
