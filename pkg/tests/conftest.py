from __future__ import annotations

import json
from pathlib import Path

import pytest

from habitq import DeviceSpec, build_state_space

REPO_ROOT = Path(__file__).resolve().parent.parent
SCENARIO_DIR = REPO_ROOT / "scenarios"


@pytest.fixture
def lamp_tv_space():
    """2x3 space used throughout: canonical order is lamp, tv."""
    return build_state_space(
        [DeviceSpec("lamp", ("off", "on")), DeviceSpec("tv", ("off", "on", "mute"))]
    )


@pytest.fixture
def vacation_scenario_path() -> Path:
    return SCENARIO_DIR / "vacation_phone.json"


@pytest.fixture
def write_scenario(tmp_path):
    """Write a scenario dict to a temp file and return its path."""

    def _write(data: dict, name: str = "scenario.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(data, indent=2))
        return path

    return _write


def base_scenario_dict(**overrides) -> dict:
    """Small valid scenario; tests override individual keys."""
    data = {
        "name": "base",
        "devices": {"lamp": ["off", "on"], "tv": ["off", "on", "mute"]},
        "rules": [
            {"match": {"lamp": "off"}, "next": {"lamp": "on"}, "priority": 1}
        ],
        "oracle": {"type": "scripted", "preferences": [], "default": "noop"},
        "initial_state": {"lamp": "off", "tv": "off"},
        "steps_per_episode": 3,
        "episodes": 2,
        "params": {"alpha": 0.5, "gamma": 0.9, "epsilon0": 0.1, "rho": 0.9},
        "seed": 0,
    }
    data.update(overrides)
    return data
