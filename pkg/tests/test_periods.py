import math

import numpy as np
import pytest

from knoids.hyperbolic import INF, GeometryError, TriangleSpec, a_emb, a_max, layout_triangle
from knoids.periods import (OmegaPoint, SolverConfig, TriangleEvaluator, classify, evaluate_point,
                            make_report, solve_first_period)

FAST = SolverConfig(R=2.0, n_extra=1.0)


@pytest.fixture(scope="module")
def evaluator():
    return TriangleEvaluator(layout_triangle(TriangleSpec(0.5, 1.2, INF)), FAST)


def test_classify():
    assert classify(0.5) == "knoid"
    assert classify(0.5, k=3) == "knoid 3"
    assert classify(0.5, 1.0) == "saddle-tower"
    assert classify(1.0 + 1e-5) == "parabolic"
    assert classify(1.4) == "hyperbolic"
    assert classify(-1.5) == "undefined"


def test_omega_validation():
    with pytest.raises(GeometryError):
        OmegaPoint(2.0, 1.2)
    with pytest.raises(GeometryError):
        OmegaPoint(0.1, 1.7)


def test_first_period_sign_and_monotone(evaluator):
    vals = [evaluator.P1(b) for b in (0.0, 0.5, 1.0, 2.0)]
    assert vals[0] > 0
    assert np.all(np.diff(vals) < 0)


def test_first_period_root(evaluator):
    b, _ = evaluator.first_period()
    assert b > 0
    assert abs(evaluator.P1(b)) < FAST.tol_p1 * (1 + b) * 2


def test_first_period_deterministic():
    b1 = solve_first_period(0.5, 1.2, INF, FAST)
    b2 = solve_first_period(0.5, 1.2, INF, FAST)
    assert b1 == b2


@pytest.fixture(scope="module")
def knoid_point():
    ev = evaluate_point(0.5, 1.2, INF, FAST)
    return ev, make_report(ev, FAST, k=3)


def test_report_fields(knoid_point):
    ev, rep = knoid_point
    assert rep.a == 0.5 and rep.phi == 1.2 and rep.l == INF
    assert rep.P2 == ev.P2
    assert rep.embedded == (0.5 >= a_emb(1.2))
    assert rep.diagnostics["v2_invariants"]
    assert abs(rep.diagnostics["twist_residual"]) < 1e-6
    d = rep.to_dict()
    assert d["l"] is None and "evaluation" not in d


def test_v2_curve_invariants(knoid_point):
    ev, _ = knoid_point
    v2 = ev.boundary.v2
    assert np.all(v2.x[1:] < 0)
    assert np.all((v2.theta[1:] > math.pi) & (v2.theta[1:] < 2 * math.pi))


def test_small_a_limit_trend():
    # P2 approaches cos(phi) for small a and grows with a
    phi = 1.2
    am = a_max(phi)
    lo = evaluate_point(am / 50, phi, INF, FAST).P2
    hi = evaluate_point(0.8 * am, phi, INF, FAST).P2
    assert abs(lo - math.cos(phi)) < 0.05
    assert hi > lo


@pytest.mark.slow
@pytest.mark.parametrize("knob, values", [("n_extra", (1.0, 2.0, 4.0, 8.0)), ("R", (1.0, 2.0, 4.0))])
def test_truncation_converges(knob, values):
    from knoids.periods import truncation_study
    study = truncation_study(0.5, 1.2, INF, SolverConfig(), knob, values)
    assert study["shrinking"], study["differences"]


def test_truncation_study_rejects_R_for_finite_l():
    from knoids.periods import truncation_study
    with pytest.raises(ValueError):
        truncation_study(0.5, 1.2, 1.0, FAST, "R")
