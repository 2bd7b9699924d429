import pytest

from textmap.config import CACHE_ENV


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help="run slow (desk-scale training) tests")


def pytest_configure(config):
    config.addinivalue_line('markers', "slow: desk-scale training (enable with --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return

    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def cache_dir(tmp_path_factory, monkeypatch):
    """Keep the pair cache of every test out of the user's home."""
    path = tmp_path_factory.mktemp('cache')
    monkeypatch.setenv(CACHE_ENV, str(path))
    return path
