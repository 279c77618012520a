import pytest

from knoids.periods import SolverConfig

# short truncation used for every full surface build
BUILD = SolverConfig(R=2.0, n_extra=1.0)


@pytest.fixture(scope="session")
def hyperbolic_build():
    from knoids.build import build_surface
    return build_surface("hyperbolic", 1.2, None, float("inf"), BUILD, a=0.75)
