import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption(
        "--run-overnight",
        action="store_true",
        default=False,
        help="run full-scale figure reproductions (hours)",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-overnight"):
        return
    skip = pytest.mark.skip(reason="needs --run-overnight")
    for item in items:
        if "overnight" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
