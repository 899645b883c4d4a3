"""
Shared fixtures: the cube-root example map, its standard controls, and a
settings singleton that re-reads the environment for every test
"""
import json
import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from fixiter.core.config import reset_settings
from fixiter.services.schemes import ControlSequences, sahu_map

DATA_DIR = Path(__file__).parent / "data"

# The settings reset below is function scoped; it only touches the environment
settings.register_profile(
    "fixiter",
    suppress_health_check=[HealthCheck.function_scoped_fixture],
    deadline=None,
)
settings.load_profile("fixiter")


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    for name in list(os.environ):
        if name.startswith("FIXITER_"):
            monkeypatch.delenv(name)
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def cube_root_map():
    """T x = cbrt(3x + 18): delta = 18^(-1/3), fixed point 3"""
    return sahu_map()


@pytest.fixture
def half_controls():
    return ControlSequences.constant(0.5, 0.5, 0.5)


@pytest.fixture
def write_json(tmp_path):
    def write(name, payload):
        path = tmp_path / name
        path.write_text(json.dumps(payload))
        return path

    return write
