from pathlib import Path

import hypothesis
import numpy as np
import pytest

from simcut.instance import SimInstance, normalize, planted_instance
from simcut.preprocess import Params, run_preprocess

np.seterr(all="warn")

FIXTURES = Path(__file__).parent / "fixtures"

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.load_profile("fast")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run acceptance-scale tests")
    parser.addoption("--update-golden", action="store_true", default=False,
                     help="rewrite recorded baselines under tests/fixtures instead of comparing")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def graph(n, edges, targets=None):
    """Normalized single-instance graph from 0-based unit-weight edges."""
    return normalize(SimInstance.from_edge_lists(n, [[(u, v, 1.0) for u, v in edges]], targets))


@pytest.fixture
def four_cycle():
    return graph(4, [(0, 1), (1, 2), (2, 3), (0, 3)], targets=[1.0])


@pytest.fixture
def path3():
    return graph(3, [(0, 1), (1, 2)])


@pytest.fixture
def triangle():
    return graph(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def geometric_star():
    """Centre 0 with leaves 1..12 of weights 2^-1 .. 2^-12 (normalized)."""
    edges = [(0, i, 2.0 ** -i) for i in range(1, 13)]
    return normalize(SimInstance.from_edge_lists(13, [edges], targets=[1.0]))


@pytest.fixture
def star_params():
    return Params(epsilon=0.2, k=1, max_t=12, gamma_override=0.4, t_override=12)


@pytest.fixture
def star_prep(geometric_star, star_params):
    return run_preprocess(geometric_star, star_params)


@pytest.fixture
def planted_pair():
    return planted_instance(6, 2, p=0.7, seed=3)


@pytest.fixture
def update_golden(request):
    return request.config.getoption("--update-golden")
