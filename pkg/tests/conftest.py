from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import settings

from kgindex.mocknet import spawn_fleet, stop_fleet

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def mocks():
    """Factory spawning mocks that are stopped at teardown."""
    started = []

    def spawn(*specs):
        handles = spawn_fleet(list(specs))
        started.extend(handles)
        return handles if len(handles) > 1 else handles[0]

    yield spawn
    stop_fleet(started)
