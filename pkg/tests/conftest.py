import pytest

from phbeam import BeamParameters, steady_state


@pytest.fixture(scope="session")
def params():
    """Reference parameter set used throughout the studies."""
    return BeamParameters(rho=1.0, ell=1.0, C=0.75, gamma=0.1, b=7.0)


@pytest.fixture(scope="session")
def equilibrium_unit(params):
    return steady_state(params, 1.0)
