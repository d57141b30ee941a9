import pytest

from vsslab.model import ProblemParams
from vsslab.profiles import find_vss_profile


@pytest.fixture(scope="session")
def vss_p2():
    params = ProblemParams(1, 2.0, 0.0)
    return params, find_vss_profile(params)


@pytest.fixture(scope="session")
def vss_p2_beta1():
    params = ProblemParams(1, 2.0, 1.0)
    return params, find_vss_profile(params)
