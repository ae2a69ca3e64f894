import json

import numpy as np
import pytest

from drivestyle.costs import BUILTIN_PROFILES
from drivestyle.planner import plan_scenario
from drivestyle.scenario import generate_synthetic_scenario, load_scenario


def scenario_doc(points=((0.0, 0.0), (100.0, 0.0)), obstacles=(), ego=None, goal=(95.0, 0.0, 2.0), duration=10.0, **extra):
    doc = {
        "id": extra.pop("id", "test"),
        "reference": {"points": [list(p) for p in points]},
        "obstacles": list(obstacles),
        "ego_init": ego or {"t": 0.0, "x": 0.0, "y": 0.0, "v": 5.0, "a": 0.0, "theta": 0.0},
        "goal": {"x": goal[0], "y": goal[1], "radius": goal[2]},
        "duration": duration,
        "dt_sim": 0.1,
    }
    doc.update(extra)
    return doc


def make_scenario(**kw):
    return load_scenario(json.dumps(scenario_doc(**kw)))


def static_obstacle(ident, x, y, theta=0.0, length=4.0, width=2.0, t_end=30.0):
    return {"id": ident, "length": length, "width": width, "states": [[0.0, x, y, theta, 0.0], [t_end, x, y, theta, 0.0]]}


def arc_points(radius=50.0, n=400, sweep=np.pi):
    ang = np.linspace(0.0, sweep, n)
    return np.column_stack([radius * np.sin(ang), radius * (1.0 - np.cos(ang))])


@pytest.fixture(scope="session")
def straight_scenario():
    return generate_synthetic_scenario("straight", 0)


@pytest.fixture(scope="session")
def planned_straight(straight_scenario):
    """Instances for every style on one straight scenario (shared; planning takes a few seconds)."""
    return {name: plan_scenario(straight_scenario, prof) for name, prof in BUILTIN_PROFILES.items()}


@pytest.fixture(scope="session")
def short_instances():
    """A handful of Comfort instances on a short lane-obstacle scenario."""
    sc = generate_synthetic_scenario("lane-obstacle", 3)
    return sc, plan_scenario(sc, BUILTIN_PROFILES["Comfort"])[:6]
