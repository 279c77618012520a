import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from knoids.conjugation import ConjugationError, compute_P2, gamma_line, integrate_theta
from knoids.jenkins_serrin import RotationProfile
from knoids.verify import ode_oracle_error


def test_ode_oracle_constant_psi():
    assert ode_oracle_error() < 1e-8


def test_twist_identity_linear_profile():
    prof = RotationProfile.linear("p", 0.0, 3.0, 1.1, n=41)
    th = integrate_theta(prof, 4.0)
    assert abs(th.twist_residual(prof.turn)) < 1e-8
    assert th.error < 1e-8


def test_theta_stays_in_band_for_positive_turn():
    # theta' = psi' - cos(theta) with psi' >= 0 cannot leave (pi/2, 3pi/2) from below pi
    prof = RotationProfile.linear("p", 0.0, 4.0, 2.0, n=41)
    th = integrate_theta(prof, math.pi)
    assert np.all(th.theta > math.pi / 2) and np.all(th.theta < 2.5 * math.pi)


def test_compute_P2_closed_form():
    # x0 sin(theta0) / y0 - cos(theta0)
    assert compute_P2(-1.0, 2.0, 1.5 * math.pi) == pytest.approx(0.5, abs=1e-15)
    assert compute_P2(0.0, 1.0, 1.5 * math.pi) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ConjugationError):
        compute_P2(0.0, -1.0, 4.0)
    with pytest.raises(ConjugationError):
        compute_P2(0.0, 1.0, 1.0)


@given(st.floats(-3, -0.01), st.floats(0.05, 3), st.floats(math.pi + 0.01, 2 * math.pi - 0.01))
def test_gamma_line_regimes(x0, y0, theta0):
    g = gamma_line(x0, y0, theta0)
    # gamma passes through (x0, y0)
    assert abs(g.geodesic.distance_to(np.array([[x0, y0]]))[0]) < 1e-9 * max(1, 1 / y0)
    if g.regime == "intersecting":
        assert -1 < g.P2 < 1
        assert g.delta == pytest.approx(math.acos(g.P2))
        assert g.crossing.x == 0.0
        # the crossing lies on gamma and the angle with the vertical axis is delta
        assert abs(math.hypot(g.crossing.x - g.center, g.crossing.y) - g.radius) < 1e-9 * g.radius
    elif g.regime == "asymptotic":
        assert abs(g.end0_x) < 1e-6 * max(1, g.radius)
    else:
        assert g.P2 > 1 or g.P2 <= -1


def test_gamma_asymptotic_endpoint():
    # x0 = -y0 at theta0 = 3pi/2 gives P2 = 1, so gamma ends at the origin
    x0, y0, th = -1.0, 1.0, 1.5 * math.pi
    g = gamma_line(x0, y0, th)
    assert g.regime == "asymptotic"
    assert g.end0_x == pytest.approx(0.0, abs=1e-12)
