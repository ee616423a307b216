from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.config import Settings  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: large Monte-Carlo runs, enabled with NETDIFF_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if Settings().slow_tests:
        return
    skip_slow = pytest.mark.skip(reason="set NETDIFF_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def poisson5():
    from src.degree import make_poisson

    return make_poisson(5.0)


@pytest.fixture
def regular3():
    from src.degree import make_regular

    return make_regular(3)
