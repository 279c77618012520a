"""Boundary of the conjugate piece.

Vertical segments of the graph conjugate to curves in horizontal slices.
Their direction theta against the horocycle frame E1 = y dx, E2 = y dy obeys
theta' = psi' - cos(theta), where psi is the direction of the horizontal
normal along the segment.  Horizontal sides conjugate to curves in vertical
planes: the horizontal speed is nu and the vertical speed is <eta, dt>.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .hyperbolic import Geodesic, HPoint, dist, dist_array
from .jenkins_serrin import RotationProfile, SideProfile


class ConjugationError(RuntimeError):
    pass


@dataclass
class ThetaSolution:
    t: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray
    cos_integral: np.ndarray    # int_{t0}^{t} cos(theta)
    error: float                # step-halving estimate (max over knots)
    dpsi: np.ndarray = field(repr=False, default=None)

    def twist_residual(self, turn: float) -> float:
        """theta(end) - theta(start) - turn + int cos(theta); zero for an exact solve."""
        return float(self.theta[-1] - self.theta[0] - turn + self.cos_integral[-1])


def _grid(t: np.ndarray, max_step: float) -> np.ndarray:
    """Substeps per knot interval so that no step exceeds max_step."""
    return np.maximum(1, np.ceil(np.diff(t) / max_step).astype(int))


def _rk4_theta(t, dpsi_fn, theta0, nsub):
    th = np.empty(len(t))
    ci = np.empty(len(t))
    th[0], ci[0] = theta0, 0.0

    def f(tt, y):
        return np.array([dpsi_fn(tt) - math.cos(y[0]), math.cos(y[0])])

    y = np.array([theta0, 0.0])
    for k in range(len(t) - 1):
        hstep = (t[k + 1] - t[k]) / nsub[k]
        tt = t[k]
        for _ in range(nsub[k]):
            k1 = f(tt, y)
            k2 = f(tt + hstep / 2, y + hstep / 2 * k1)
            k3 = f(tt + hstep / 2, y + hstep / 2 * k2)
            k4 = f(tt + hstep, y + hstep * k3)
            y = y + hstep / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            tt += hstep
        th[k + 1], ci[k + 1] = y
    return th, ci


def _dpsi_function(profile: RotationProfile):
    if len(profile.t) < 2:
        return lambda t: 0.0
    d = PchipInterpolator(profile.t, profile.psi).derivative()
    return lambda t: float(d(t))


def integrate_theta(profile: RotationProfile, theta0: float, max_step: float | None = None,
                    tol: float | None = None) -> ThetaSolution:
    """Classical RK4 for theta' = psi' - cos(theta) on the profile's knots."""
    t = np.asarray(profile.t, float)
    if len(t) < 2:
        return ThetaSolution(t.copy(), np.array([theta0]), np.array([-math.cos(theta0)]),
                             np.zeros(1), 0.0, np.zeros(1))
    span = t[-1] - t[0]
    step = max_step or span / 200.0
    nsub = _grid(t, step)
    dpsi = _dpsi_function(profile)
    th, ci = _rk4_theta(t, dpsi, theta0, nsub)
    th2, _ = _rk4_theta(t, dpsi, theta0, 2 * nsub)
    err = float(np.max(np.abs(th - th2)))
    if tol is not None and err > tol:
        raise ConjugationError(f"theta integration step-halving error {err:.2e} above {tol:.2e}")
    dp = np.array([dpsi(s) for s in t])
    return ThetaSolution(t, th2, dp - np.cos(th2), ci, err, dp)


@dataclass
class ConjCurve:
    """Conjugate of a vertical segment: a curve in the slice at height z."""

    role: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    z: float
    error: float = 0.0

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    def speed_defect(self) -> float:
        """max | |gamma'|_hyp - 1 | from the ODE right-hand side (exact speed is 1)."""
        dx = self.y * np.cos(self.theta)
        dy = self.y * np.sin(self.theta)
        return float(np.max(np.abs(np.hypot(dx, dy) / self.y - 1.0)))

    def end(self) -> HPoint:
        return HPoint(float(self.x[-1]), float(self.y[-1]))

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,x,y,z,theta\n")
            for row in zip(self.t, self.x, self.y, self.theta):
                fh.write(f"{row[0]!r},{row[1]!r},{row[2]!r},{self.z!r},{row[3]!r}\n")


def _hermite(t0, t1, f0, f1, d0, d1, s):
    h = t1 - t0
    u = (s - t0) / h
    h00 = 2 * u**3 - 3 * u**2 + 1
    h10 = u**3 - 2 * u**2 + u
    h01 = -2 * u**3 + 3 * u**2
    h11 = u**3 - u**2
    return h00 * f0 + h10 * h * d0 + h01 * f1 + h11 * h * d1


def integrate_position(theta: ThetaSolution, start: HPoint, role: str = "v", z: float = 0.0,
                       max_step: float | None = None) -> ConjCurve:
    """x' = y cos(theta), y' = y sin(theta) by RK4 in (x, log y), theta Hermite-interpolated."""
    t = theta.t
    n = len(t)
    x = np.empty(n)
    s = np.empty(n)
    x[0], s[0] = start.x, math.log(start.y)
    if n < 2:
        return ConjCurve(role, t.copy(), x, np.exp(s), theta.theta.copy(), z)
    step = max_step or (t[-1] - t[0]) / 200.0
    nsub = _grid(t, step)

    def run(nsub):
        xs, ss = np.empty(n), np.empty(n)
        xs[0], ss[0] = x[0], s[0]
        X, S = x[0], s[0]
        for k in range(n - 1):
            a, b_ = t[k], t[k + 1]
            args = (a, b_, theta.theta[k], theta.theta[k + 1], theta.dtheta[k], theta.dtheta[k + 1])
            hstep = (b_ - a) / nsub[k]
            tt = a
            for _ in range(nsub[k]):
                th0 = _hermite(*args, tt)
                thm = _hermite(*args, tt + hstep / 2)
                th1 = _hermite(*args, tt + hstep)
                # x' = e^S cos(th), S' = sin(th); S has a closed-form increment per stage
                k1s, k2s, k4s = math.sin(th0), math.sin(thm), math.sin(th1)
                k1x = math.exp(S) * math.cos(th0)
                k2x = math.exp(S + hstep / 2 * k1s) * math.cos(thm)
                k3x = math.exp(S + hstep / 2 * k2s) * math.cos(thm)
                k4x = math.exp(S + hstep * k2s) * math.cos(th1)
                X += hstep / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
                S += hstep / 6 * (k1s + 4 * k2s + k4s)
                tt += hstep
            xs[k + 1], ss[k + 1] = X, S
        return xs, ss

    x1, s1 = run(nsub)
    x2, s2 = run(2 * nsub)
    y2 = np.exp(s2)
    if not np.all(np.isfinite(y2)) or np.any(y2 <= 0):
        raise ConjugationError(f"{role}: integration left the half-plane")
    # error measured hyperbolically, relative to the local scale y
    err = float(np.max(np.hypot(x2 - x1, np.exp(s2) - np.exp(s1)) / y2))
    return ConjCurve(role, t.copy(), x2, y2, theta.theta.copy(), z, err)


@dataclass
class HCurve:
    """Conjugate of a horizontal side: points on a geodesic plus heights."""

    role: str
    s: np.ndarray            # arclength on the original side
    sigma: np.ndarray        # signed displacement along the carrier geodesic
    points: np.ndarray
    z: np.ndarray
    geodesic: Geodesic
    sign_changes: int = 0

    @property
    def length(self) -> float:
        return float(abs(self.sigma[-1]))


def _cumtrapz(f, s):
    return np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(s))])


def reconstruct_h_tilde(profile: SideProfile, geodesic: Geodesic, start: HPoint, z0: float,
                        role: str, reverse: bool = False, threshold: float = 0.05) -> HCurve:
    """Walk along geodesic (in its direction of travel) with speed nu; height speed <eta, dt>.

    The side profile is ordered along the clockwise boundary loop.  With
    reverse=True the side is walked backwards (heights change by -q ds).
    """
    s, nu, q = profile.s, profile.nu, profile.q
    if np.any(nu < 0) or np.any(nu > 1 + 1e-12):
        raise ConjugationError(f"{role}: nu outside [0, 1]")
    dz = profile.dz if profile.dz is not None else 0.5 * (q[1:] + q[:-1]) * np.diff(s)
    if reverse:
        s = s[-1] - s[::-1]
        nu, q, dz = nu[::-1], -q[::-1], -dz[::-1]
    sigma = _cumtrapz(nu, s)
    z = z0 + np.concatenate([[0.0], np.cumsum(dz)])
    pts = geodesic.point_from(start, sigma)
    # count sign changes of the height speed (ignoring a small band around zero)
    sgn = np.sign(q[np.abs(q) > threshold])
    changes = int(np.sum(sgn[1:] != sgn[:-1]))
    return HCurve(role, s, sigma, pts, z, geodesic, changes)


def compute_P2(x0: float, y0: float, theta0: float) -> float:
    if not y0 > 0:
        raise ConjugationError("y0 must be positive")
    if not (math.pi < theta0 < 2 * math.pi):
        raise ConjugationError(f"theta0={theta0} outside (pi, 2pi)")
    return x0 * math.sin(theta0) / y0 - math.cos(theta0)


@dataclass
class GammaInfo:
    """The geodesic gamma(s) = (xc + r cos s, r sin s) with gamma(theta0 - pi) = (x0, y0)."""

    geodesic: Geodesic
    P2: float
    regime: str                    # "intersecting" | "asymptotic" | "disjoint"
    delta: float | None
    crossing: HPoint | None
    center: float
    radius: float
    end0_x: float                  # first coordinate of gamma(0)

    def to_dict(self) -> dict:
        return {"P2": self.P2, "regime": self.regime, "delta": self.delta,
                "crossing": None if self.crossing is None else [self.crossing.x, self.crossing.y],
                "center": self.center, "radius": self.radius, "gamma0_x": self.end0_x}


def gamma_line(x0: float, y0: float, theta0: float, tol: float = 1e-9) -> GammaInfo:
    P2 = compute_P2(x0, y0, theta0)
    st = math.sin(theta0)
    r = -y0 / st
    xc = x0 - y0 * math.cos(theta0) / st
    geo = Geodesic.from_direction(HPoint(x0, y0), theta0 - math.pi / 2)
    if abs(P2 - 1.0) <= tol:
        regime, delta, cross = "asymptotic", 0.0, None
    elif P2 > 1.0:
        regime, delta, cross = "disjoint", None, None
    elif P2 <= -1.0:
        regime, delta, cross = "disjoint", None, None
    else:
        delta = math.acos(P2)
        regime = "intersecting"
        cross = HPoint(0.0, r * math.sin(delta))
    return GammaInfo(geo, P2, regime, delta, cross, xc, r, xc + r)


@dataclass
class ConjBoundary:
    v2: ConjCurve
    v3: ConjCurve
    v1: ConjCurve | None
    h1: HCurve
    h2: HCurve | None
    h3: HCurve
    gamma: GammaInfo
    x0: float
    y0: float
    theta0: float
    theta_v2: ThetaSolution
    twist_residual: float
    closure: dict
    heights: dict
    flags: list = field(default_factory=list)

    @property
    def P2(self) -> float:
        return self.gamma.P2


def _perp_into(geo: Geodesic, p: np.ndarray, side: float) -> float:
    """Direction at p normal to geo: side=-1 rotates the travel direction by -pi/2."""
    return geo.direction_at(p) + side * math.pi / 2


def assemble_conj_boundary(v2_profile: RotationProfile, v3_profile: RotationProfile,
                           v1_profile: RotationProfile | None, sides: dict[str, SideProfile],
                           fluxes: dict[str, float], max_step_frac: float = 1 / 200) -> ConjBoundary:
    """Place all six conjugate curves in the frame where h3 lies over the y-axis and
    v2 starts at (0, 1), height 0, with direction -E1.

    The forward chain runs v2 -> h1 -> v3 -> h2 and the backward chain h3 -> v1;
    the closure residual compares their ends.
    """
    flags = []
    b = v2_profile.t[-1] - v2_profile.t[0]
    start = HPoint(0.0, 1.0)
    th2 = integrate_theta(v2_profile, math.pi, max_step=max(b, 1e-12) * max_step_frac)
    v2 = integrate_position(th2, start, "v2", 0.0, max_step=max(b, 1e-12) * max_step_frac)
    x0, y0, theta0 = float(v2.x[-1]), float(v2.y[-1]), float(th2.theta[-1])
    twist = th2.twist_residual(v2_profile.turn)
    if b > 0 and v2.x[1] > 0:
        flags.append("v2 starts toward x > 0: frame would need a mirror")
    if b > 0:
        gamma = gamma_line(x0, y0, theta0)
    else:
        # degenerate v2: gamma is the geodesic through (0, 1) normal to -E1
        gamma = GammaInfo(Geodesic("line", 0.0, 0.0, 1), 1.0, "asymptotic", 0.0, None, math.inf,
                          math.inf, 0.0)

    # h1 along gamma, away from the y-axis crossing (direction theta0 - pi/2)
    h1 = reconstruct_h_tilde(sides["l1"], gamma.geodesic, HPoint(x0, y0), 0.0, "h1")
    if h1.sign_changes != 1:
        flags.append(f"h1 height speed changes sign {h1.sign_changes} times")
    p_h1 = h1.points[-1]
    # v3 leaves gamma back into the piece
    theta3 = _perp_into(gamma.geodesic, p_h1, -1.0)
    span3 = v3_profile.t[-1] - v3_profile.t[0]
    th3 = integrate_theta(v3_profile, theta3, max_step=span3 * max_step_frac)
    v3 = integrate_position(th3, HPoint(*p_h1), "v3", float(h1.z[-1]), max_step=span3 * max_step_frac)

    # h3 up the y-axis from (0, 1): walked backwards from p2 to p1
    yaxis = Geodesic("line", 0.0, 0.0, 1)
    h3 = reconstruct_h_tilde(sides["l3"], yaxis, start, 0.0, "h3", reverse=True)
    if h3.sign_changes != 0:
        flags.append("h3 height is not monotone")
    heights = {"v2": 0.0, "v3": float(h1.z[-1]), "v1": float(h3.z[-1]),
               "P1": fluxes["l1"], "flux_l2": fluxes["l2"], "flux_l3": fluxes["l3"]}

    v1 = h2 = None
    closure: dict = {}
    if v1_profile is not None:
        p_h3 = h3.points[-1]
        span1 = v1_profile.t[-1] - v1_profile.t[0]
        th1 = integrate_theta(v1_profile, math.pi, max_step=span1 * max_step_frac)
        v1 = integrate_position(th1, HPoint(*p_h3), "v1", float(h3.z[-1]), max_step=span1 * max_step_frac)
        # h2 leaves the end of v3 as h1 leaves the end of v2
        end3 = v3.end()
        g2 = Geodesic.from_direction(end3, float(th3.theta[-1]) - math.pi / 2)
        h2 = reconstruct_h_tilde(sides["l2"], g2, end3, float(h1.z[-1]), "h2")
        f_end = h2.points[-1]
        b_end = np.array([v1.x[-1], v1.y[-1]])
        closure = {
            "euclidean": float(np.hypot(*(f_end - b_end))),
            "hyperbolic": float(dist_array(f_end, b_end)),
            "height": float(h2.z[-1] - v1.z),
            "angle": float(_angle_gap(float(th1.theta[-1]), float(th3.theta[-1]))),
        }
    return ConjBoundary(v2, v3, v1, h1, h2, h3, gamma, x0, y0, theta0, th2, twist, closure,
                        heights, flags)


def _angle_gap(a: float, b: float) -> float:
    """Unsigned difference of two directions modulo 2 pi."""
    return abs((a - b + math.pi) % (2 * math.pi) - math.pi)
