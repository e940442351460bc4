import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def pytest_addoption(parser):
    parser.addoption("--slow", action="store_true", default=False, help="run the slow CM cases")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: needs --slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--slow"):
        return
    skip = pytest.mark.skip(reason="pass --slow to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
