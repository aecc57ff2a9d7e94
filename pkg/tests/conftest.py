import pytest

from feedresponse.types import ModelParams, PopulationParams


@pytest.fixture(scope="session")
def ref_params():
    return ModelParams(mu=14.0, lam=14.0, views_per_post=38.0, p_act=0.12)


@pytest.fixture(scope="session")
def ref_pop():
    return PopulationParams("adv", 391, 1.61)
