import numpy as np
import pytest

import ssdn
from ssdn.diagnostics import analytic_certificate, certificate_from_run


@pytest.fixture(scope="session")
def bundled():
    return ssdn.load_scenario("paper_sec6")


@pytest.fixture(scope="session")
def bundled_reference(bundled):
    """Certificate from a long coarse-step run driven to a 1e-10 field residual."""
    params = bundled.algorithm_params.replace(h=0.02)
    return certificate_from_run(bundled.problem, bundled.initial_state, params, tol=1e-10, t_max=6000)


@pytest.fixture(scope="session")
def bundled_analytic(bundled):
    return analytic_certificate(bundled.problem, bundled.algorithm_params, [0.0, 0.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
