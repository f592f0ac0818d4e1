# Slow studies run the full level sets; enable them with --runslow.
import pytest


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow studies')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: full size studies, only run with --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


# A SystemExit inside a study leaves the progress bar registered; reset it between tests.
@pytest.fixture(autouse=True)
def reset_progress_bar():
    yield
    import util

    util.ProgressBar.current_bar = None
