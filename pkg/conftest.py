import os

import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo runs; set SNLS_RUN_SLOW=1 to include them")


def pytest_collection_modifyitems(config, items):
    if os.getenv("SNLS_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="slow; set SNLS_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
