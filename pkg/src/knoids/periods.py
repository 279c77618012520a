"""The two period problems over Omega = {(a, phi)}.

P1(a, phi, b) is the flux across l1 and is strictly decreasing in b, so for
every (a, phi) there is a unique b = f(a, phi) closing the first period.
P2(a) = P2(a, phi, f(a, phi)) is then searched for a prescribed value by a
left-to-right scan followed by Brent iterations.
"""
from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy.optimize import brentq

from .conjugation import ConjBoundary, assemble_conj_boundary
from .hyperbolic import INF, TriangleSpec, a_emb, a_max, layout_triangle
from .jenkins_serrin import (SIDES, DirichletSpec, GraphSolution, MeshGrading, RotationProfile,
                             all_fluxes, angle_profile_nu, build_mesh, flux_P1,
                             rotation_profile_psi, solve_graph, transplant_mesh)
from .minimal_graph import MinimalGraphProblem, SolverError


class PeriodError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    h: float = 0.1
    R: float = 8.0                  # truncation of the ideal vertex
    n_extra: float | None = 10.0    # N = b + n_extra; None means b + 10 * diameter
    tol_pde: float = 1e-10
    tol_p1: float = 1e-6            # |P1| < tol_p1 * (1 + b)
    tol_p2: float = 1e-4
    eps: float = 1e-3               # a ranges over [eps, 1 - eps] * a_max
    scan_points: int = 9
    b_start: float = 0.5
    b_cap: float = 1e3
    psi_threshold: float = 0.05
    seed: int = 20240611
    grading: MeshGrading = field(default_factory=MeshGrading)

    def dirichlet(self, pose, b: float) -> DirichletSpec:
        return DirichletSpec.for_pose(pose, b, R=self.R, extra=self.n_extra)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_extra"] = self.n_extra
        return d


@dataclass(frozen=True)
class OmegaPoint:
    a: float
    phi: float
    l: float = INF

    def __post_init__(self):
        # validation is shared with the triangle layout
        TriangleSpec(self.a, self.phi, self.l)


def classify(P2: float, l: float = INF, tol: float = 1e-3, k: int | None = None) -> str:
    """Family tag from P2 alone (and whether the vertical side is finite)."""
    if abs(P2 - 1.0) <= tol:
        return "parabolic"
    if P2 > 1.0:
        return "hyperbolic"
    if abs(P2) < 1.0:
        base = "saddle-tower" if math.isfinite(l) else "knoid"
        return base if k is None else f"{base} {k}"
    return "undefined"


@dataclass
class PeriodReport:
    a: float
    phi: float
    l: float
    b: float
    P1: float
    P2: float
    x0: float
    y0: float
    theta0: float
    delta: float | None
    regime: str
    family: str
    embedded: bool
    mesh: dict
    diagnostics: dict
    evaluation: "Evaluation | None" = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "evaluation"}
        d = copy.deepcopy(d)
        d["l"] = None if not math.isfinite(self.l) else self.l
        return d


@dataclass
class Evaluation:
    """Everything computed at one (a, phi) once the first period is closed."""

    a: float
    b: float
    P1: float
    sol: GraphSolution
    boundary: ConjBoundary
    profiles: dict
    bracket: tuple

    @property
    def P2(self) -> float:
        return self.boundary.P2


class _Converged(Exception):
    def __init__(self, x):
        self.x = x


def _root(f, lo: float, hi: float, flo: float, fhi: float, done, xtol: float) -> float:
    """Brent's method, stopped early as soon as done(x, f(x)) holds."""
    if done(lo, flo):
        return lo
    if done(hi, fhi):
        return hi

    def g(x):
        v = f(x)
        if done(x, v):
            raise _Converged(x)
        return v

    try:
        return brentq(g, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)
    except _Converged as c:
        return c.x


class TriangleEvaluator:
    """P1 and P2 at a fixed triangle; the mesh does not depend on b and is reused."""

    def __init__(self, pose, config: SolverConfig, mesh=None):
        self.pose = pose
        self.config = config
        if mesh is None:
            spec = config.dirichlet(pose, config.b_start)
            mesh = build_mesh(pose, spec, config.h, config.grading, seed=config.seed)
        self.mesh = mesh
        self.problem = MinimalGraphProblem(mesh)
        self.u = None
        self.solves = 0

    def solve(self, b: float, warm: bool = True) -> GraphSolution:
        spec = self.config.dirichlet(self.pose, b)
        sol = solve_graph(self.mesh, spec, tol=self.config.tol_pde, u0=self.u if warm else None,
                          problem=self.problem, pose=self.pose)
        self.u = sol.u
        self.solves += 1
        return sol

    def P1(self, b: float) -> float:
        return flux_P1(self.solve(b))

    def first_period(self, hint: float | None = None) -> tuple[float, tuple]:
        """Root b of P1.

        Without a hint the bracket is [0, B] with B doubled until P1(B) < 0;
        with a hint (a nearby root) the bracket grows geometrically around it.
        """
        cfg = self.config
        if hint is None or hint <= 0:
            p0 = self.P1(0.0)
            if p0 <= 0:
                raise PeriodError(f"P1(b=0) = {p0:.3e} is not positive")
            lo, plo = 0.0, p0
            hi = cfg.b_start
            phi_ = self.P1(hi)
            while phi_ >= 0:
                lo, plo = hi, phi_
                hi *= 2
                if hi > cfg.b_cap:
                    raise PeriodError(f"no sign change of P1 up to b = {lo:.6g}")
                phi_ = self.P1(hi)
        else:
            step = 0.05 * hint
            lo = hi = hint
            plo = phi_ = self.P1(hint)
            while plo <= 0:
                hi, phi_ = lo, plo
                lo = max(0.0, lo - step)
                step *= 2
                plo = self.P1(lo)
                if lo == 0.0 and plo <= 0:
                    raise PeriodError(f"P1(b=0) = {plo:.3e} is not positive")
            while phi_ >= 0:
                lo, plo = hi, phi_
                hi += step
                step *= 2
                if hi > cfg.b_cap:
                    raise PeriodError(f"no sign change of P1 up to b = {lo:.6g}")
                phi_ = self.P1(hi)

        def done(x, v):
            return abs(v) < 0.01 * cfg.tol_p1 * (1 + abs(x))

        b = _root(self.P1, lo, hi, plo, phi_, done, xtol=1e-12)
        return b, (lo, hi)

    def evaluate(self, hint: float | None = None) -> Evaluation:
        b, bracket = self.first_period(hint)
        sol = self.solve(b)
        boundary, profiles = conjugate_boundary(sol, self.pose, self.config)
        return Evaluation(self.pose.spec.a, b, flux_P1(sol), sol, boundary, profiles, bracket)


def conjugate_boundary(sol: GraphSolution, pose, config: SolverConfig):
    """Vertex rotation profiles, side angle profiles and the assembled conjugate boundary."""
    thr = config.psi_threshold
    pr2 = rotation_profile_psi(sol, "p2", pose, threshold=thr)
    pr3 = rotation_profile_psi(sol, "p3", pose, threshold=thr)
    work = pose.working(sol.spec.R)
    if pose.spec.ideal:
        # the cut-off ideal corner is too thin to sample: the normal turns uniformly
        pr1 = RotationProfile.linear("p1", 0.0, sol.spec.N, -work.angle1)
    else:
        pr1 = rotation_profile_psi(sol, "p1", pose, threshold=thr)
    sides = {k: angle_profile_nu(sol, k) for k in SIDES}
    cb = assemble_conj_boundary(pr2, pr3, pr1, sides, all_fluxes(sol))
    return cb, {"p1": pr1, "p2": pr2, "p3": pr3, **sides}


def solve_first_period(a: float, phi: float, l: float = INF,
                       config: SolverConfig = SolverConfig()) -> float:
    OmegaPoint(a, phi, l)
    ev = TriangleEvaluator(layout_triangle(TriangleSpec(a, phi, l)), config)
    return ev.first_period()[0]


def evaluate_point(a: float, phi: float, l: float = INF, config: SolverConfig = SolverConfig(),
                   hint: float | None = None) -> Evaluation:
    OmegaPoint(a, phi, l)
    return TriangleEvaluator(layout_triangle(TriangleSpec(a, phi, l)), config).evaluate(hint)


def make_report(ev: Evaluation, config: SolverConfig, k: int | None = None,
                extra: dict | None = None) -> PeriodReport:
    """Report for an evaluation, with P1 recomputed from a cold start."""
    pose = ev.sol.pose
    spec = pose.spec
    check = TriangleEvaluator(pose, config, mesh=ev.sol.mesh)
    sol = check.solve(ev.b, warm=False)
    P1 = flux_P1(sol)
    cb = ev.boundary
    g = cb.gamma
    flags = list(cb.flags)
    p1_tol = config.tol_p1 * (1 + ev.b)
    if abs(P1) >= 2 * p1_tol:
        flags.append(f"P1 residual {P1:.3e} above tolerance on re-evaluation")
    for name in ("p2", "p3"):
        pr = ev.profiles[name]
        if np.any(pr.flagged):
            flags.append(f"psi at {name}: {int(pr.flagged.sum())} samples with spread > "
                         f"{config.psi_threshold}")
    v2_ok = bool(np.all(cb.v2.x[1:] < 0)) and bool(np.all((cb.v2.theta[1:] > math.pi)
                                                        & (cb.v2.theta[1:] < 2 * math.pi)))
    diag = {
        "newton_residual": sol.residual,
        "twist_residual": cb.twist_residual,
        "theta_error": cb.theta_v2.error,
        "closure": cb.closure,
        "heights": cb.heights,
        "p1_bracket": list(ev.bracket),
        "psi_spread_max": {n: float(ev.profiles[n].spread.max()) for n in ("p2", "p3")},
        "psi_radius": {n: ev.profiles[n].radius for n in ("p2", "p3")},
        "v2_invariants": v2_ok,
        "theta_range": [float(cb.v2.theta.min()), float(cb.v2.theta.max())],
        "gamma_end0_x": g.end0_x,
        "flags": flags,
    }
    if extra:
        diag.update(extra)
    mesh = {"h": config.h, "N": ev.sol.spec.N, "R": ev.sol.spec.R, "nodes": ev.sol.mesh.n_nodes,
            "triangles": int(len(ev.sol.mesh.triangles)), "seed": config.seed}
    return PeriodReport(spec.a, spec.phi, spec.l, ev.b, P1, cb.P2, cb.x0, cb.y0, cb.theta0,
                        g.delta, g.regime, classify(cb.P2, spec.l, k=k),
                        bool(spec.a >= a_emb(spec.phi, spec.l)), mesh, diag, ev)


def scan_grid(phi: float, l: float, config: SolverConfig) -> np.ndarray:
    am = a_max(phi, l)
    return np.linspace(config.eps * am, (1 - config.eps) * am, config.scan_points)


def solve_P2(phi: float, target: float, l: float = INF, config: SolverConfig = SolverConfig(),
             k: int | None = None) -> PeriodReport:
    """Leftmost a with P2(a, phi, f(a, phi)) = target."""
    grid = scan_grid(phi, l, config)
    scanned = []
    prev = None
    bracket = None
    for a in grid:
        try:
            ev = evaluate_point(float(a), phi, l, config, hint=prev.b if prev else None)
        except (SolverError, PeriodError) as exc:
            scanned.append({"a": float(a), "error": str(exc)})
            prev = None
            continue
        scanned.append({"a": float(a), "b": ev.b, "P2": ev.P2})
        if prev is not None and (prev.P2 - target) * (ev.P2 - target) <= 0:
            bracket = (prev, ev)
            break
        prev = ev
    if bracket is None:
        raise PeriodError(f"no sign change of P2 - {target} on the a-grid", scanned)
    lo, hi = bracket
    ev = _refine_P2(lo.a, hi.a, phi, l, target, config)
    rep = make_report(ev, config, k=k, extra={"target": target, "scan": scanned,
                                              "a_bracket": [lo.a, hi.a]})
    # the root lives on a transplanted mesh; a mesh built for the root itself
    # shows the size of the discretisation noise in P2
    fresh = evaluate_point(ev.a, phi, l, config, hint=ev.b)
    rep.diagnostics["P2_fresh_mesh"] = fresh.P2
    if abs(fresh.P2 - ev.P2) > config.tol_p2:
        rep.diagnostics["flags"].append(
            f"P2 moves by {fresh.P2 - ev.P2:.2e} on a fresh mesh (discretisation noise above tol_p2)")
    return rep


def _refine_P2(a_lo: float, a_hi: float, phi: float, l: float, target: float,
               config: SolverConfig) -> Evaluation:
    """Brent iterations on a with every mesh moved from one reference mesh."""
    a_ref = 0.5 * (a_lo + a_hi)
    ref_pose = layout_triangle(TriangleSpec(a_ref, phi, l))
    ref_mesh = build_mesh(ref_pose, config.dirichlet(ref_pose, config.b_start), config.h,
                          config.grading, seed=config.seed)
    cache: dict[float, Evaluation] = {}
    warm = {"u": None, "b": None}

    def at(a):
        if a not in cache:
            pose = layout_triangle(TriangleSpec(a, phi, l))
            R = config.R if pose.spec.ideal else None
            ev = TriangleEvaluator(pose, config, mesh=transplant_mesh(ref_mesh, ref_pose, pose, R))
            ev.u = warm["u"]
            cache[a] = ev.evaluate(warm["b"])
            warm["u"], warm["b"] = cache[a].sol.u, cache[a].b
        return cache[a]

    f_lo = at(a_lo).P2 - target
    f_hi = at(a_hi).P2 - target
    if f_lo * f_hi > 0:
        raise PeriodError(f"P2 bracket [{a_lo:.6g}, {a_hi:.6g}] lost on the common mesh")

    def done(a, v):
        return abs(v) < config.tol_p2

    a = _root(lambda a: at(a).P2 - target, a_lo, a_hi, f_lo, f_hi, done, xtol=1e-10)
    return at(a)


def solve_second_period(phi: float, k: int, l: float = INF,
                        config: SolverConfig = SolverConfig()) -> PeriodReport:
    if k < 3:
        raise ValueError("k must be at least 3")
    if not (math.pi / k < phi < math.pi / 2):
        raise ValueError(f"need pi/{k} < phi < pi/2, got phi={phi}")
    return solve_P2(phi, math.cos(math.pi / k), l, config, k=k)


def solve_parabolic(phi: float, l: float = INF, config: SolverConfig = SolverConfig()) -> PeriodReport:
    if not (0 < phi < math.pi / 2):
        raise ValueError("phi outside (0, pi/2)")
    return solve_P2(phi, 1.0, l, config)


def find_hyperbolic(phi: float, target: float, l: float = INF,
                    config: SolverConfig = SolverConfig()) -> PeriodReport:
    if not target > 1:
        raise ValueError("hyperbolic target must exceed 1")
    return solve_P2(phi, target, l, config)


def truncation_study(a: float, phi: float, l: float = INF, config: SolverConfig = SolverConfig(),
                     knob: str = "n_extra", values=(1.0, 2.0, 4.0, 8.0)) -> dict:
    """b and P2 at one (a, phi) as N - b or R doubles; successive differences
    should shrink if the truncation is converging."""
    if knob not in ("n_extra", "R"):
        raise ValueError("knob must be 'n_extra' or 'R'")
    if knob == "R" and math.isfinite(l):
        raise ValueError("R only truncates an ideal vertex")
    rows, hint = [], None
    for v in values:
        ev = evaluate_point(a, phi, l, replace(config, **{knob: float(v)}), hint=hint)
        hint = ev.b
        rows.append({knob: float(v), "b": ev.b, "P2": ev.P2})
    diffs = {q: [abs(r1[q] - r0[q]) for r0, r1 in zip(rows, rows[1:])] for q in ("b", "P2")}
    shrinking = all(all(d1 < d0 for d0, d1 in zip(d, d[1:])) for d in diffs.values())
    return {"knob": knob, "rows": rows, "differences": diffs, "shrinking": shrinking}
