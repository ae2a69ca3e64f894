"""Style profiles and the kinematic / perception cost terms of the planner."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .sampler import obstacle_clearance, DS_FLOOR
from .scenario import Scenario, Trajectory, wrap_angle

STYLE_NAMES = ("Comfort", "Balanced", "Sporty", "Safety", "Default")
TERMS = ("w_j_lon", "w_j_lat", "w_v", "w_obs", "w_pm", "w_ve")

D_SAFE = 3.0
SENSOR_RANGE = 30.0
N_RAYS = 180
VISIBILITY_STRIDE = 5
BRAKE_DECEL = 4.0
REACTION_TIME = 0.5


@dataclass(frozen=True)
class StyleProfile:
    name: str
    w_kin: tuple  # w_j_lon, w_j_lat, w_v, w_obs
    w_ext: tuple  # w_pm, w_ve

    def __post_init__(self):
        w_kin = tuple(float(w) for w in self.w_kin)
        w_ext = tuple(float(w) for w in self.w_ext)
        if len(w_kin) != 4 or len(w_ext) != 2:
            raise ValueError("w_kin needs 4 weights and w_ext 2")
        if min(w_kin + w_ext) < 0:
            raise ValueError(f"profile {self.name}: weights must be non-negative")
        object.__setattr__(self, "w_kin", w_kin)
        object.__setattr__(self, "w_ext", w_ext)

    @property
    def weights(self):
        return np.array(self.w_kin + self.w_ext)

    def scaled(self, factor):
        return StyleProfile(self.name, tuple(w * factor for w in self.w_kin), tuple(w * factor for w in self.w_ext))


# Columns of the reference weight table, rows in TERMS order.
_TABLE = {
    "Comfort": (0.80, 0.80, 0.30, 0.30, 3.0, 0.0),
    "Balanced": (0.50, 0.50, 0.60, 0.80, 5.0, 0.5),
    "Sporty": (0.25, 0.25, 1.00, 0.60, 4.0, 0.8),
    "Safety": (0.40, 0.40, 0.30, 2.00, 8.0, 1.5),
    "Default": (0.20, 0.20, 1.00, 0.00, 5.0, 0.0),
}

BUILTIN_PROFILES = {name: StyleProfile(name, col[:4], col[4:]) for name, col in _TABLE.items()}


def get_profile(name):
    try:
        return BUILTIN_PROFILES[name]
    except KeyError:
        raise KeyError(f"unknown style {name!r}; built-ins are {list(BUILTIN_PROFILES)}") from None


def profile_table(profiles=None):
    """Profiles laid out like the weight table: one column of six numbers per style."""
    profiles = BUILTIN_PROFILES if profiles is None else profiles
    table = {"terms": list(TERMS)}
    for name, p in profiles.items():
        table[name] = list(p.w_kin + p.w_ext)
    return table


def profiles_from_table(table):
    terms = table.get("terms", list(TERMS))
    if list(terms) != list(TERMS):
        raise ValueError(f"table rows must be {list(TERMS)}")
    out = {}
    for name, col in table.items():
        if name == "terms":
            continue
        if len(col) != 6:
            raise ValueError(f"style {name}: expected 6 weights, got {len(col)}")
        out[name] = StyleProfile(name, col[:4], col[4:])
    return out


def load_profiles(path):
    """Read a JSON or TOML profile table."""
    path = Path(path)
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib

        table = tomllib.loads(path.read_text())
    else:
        table = json.loads(path.read_text())
    return profiles_from_table(table)


@dataclass(frozen=True)
class CostVector:
    c_kin: tuple  # jerk_lon, jerk_lat, vel_offset, obstacle
    c_ext: tuple  # phantom, visibility

    def __post_init__(self):
        c_kin = tuple(float(c) for c in self.c_kin)
        c_ext = tuple(float(c) for c in self.c_ext)
        if len(c_kin) != 4 or len(c_ext) != 2:
            raise ValueError("c_kin needs 4 entries and c_ext 2")
        for c in c_kin + c_ext:
            if not np.isfinite(c) or c < 0:
                raise ValueError(f"cost components must be finite and non-negative, got {c}")
        object.__setattr__(self, "c_kin", c_kin)
        object.__setattr__(self, "c_ext", c_ext)

    @property
    def values(self):
        return np.array(self.c_kin + self.c_ext)


def total_cost(profile: StyleProfile, costs: CostVector) -> float:
    return float(np.dot(profile.w_kin, costs.c_kin) + np.dot(profile.w_ext, costs.c_ext))


# ---------------------------------------------------------------------------
# kinematic terms
# ---------------------------------------------------------------------------

def kinematic_cost_matrix(x, y, v, a, theta, dt, v_desired, clearance, d_safe=D_SAFE):
    """Batched kinematic costs for ``(C, N)`` state arrays; returns ``(C, 4)``."""
    jerk_lon = np.diff(a, axis=-1) / dt
    dth = wrap_angle(np.diff(theta, axis=-1))
    ds = np.maximum(np.hypot(np.diff(x, axis=-1), np.diff(y, axis=-1)), DS_FLOOR)
    a_lat = v[..., :-1] ** 2 * (dth / ds)
    jerk_lat = np.diff(a_lat, axis=-1) / dt
    pen = np.maximum(0.0, d_safe - clearance)
    return np.stack(
        [
            np.mean(jerk_lon**2, axis=-1),
            np.mean(jerk_lat**2, axis=-1),
            np.mean((v - v_desired) ** 2, axis=-1),
            np.mean(pen**2, axis=-1),
        ],
        axis=-1,
    )


def eval_kinematic_costs(traj: Trajectory, scenario: Scenario, v_desired, d_safe=D_SAFE, clearance=None):
    """Jerk, velocity-offset and obstacle-proximity costs of one trajectory."""
    if len(traj) < 3:
        raise ValueError("trajectory too short for jerk costs (need >= 3 states)")
    if clearance is None:
        clearance = obstacle_clearance(scenario, traj.t, traj.x, traj.y, traj.theta)[0]
    rows = [arr[None, :] for arr in (traj.x, traj.y, traj.v, traj.a, traj.theta)]
    c = kinematic_cost_matrix(*rows, traj.dt, v_desired, np.asarray(clearance)[None, :], d_safe)
    return np.maximum(c[0], 0.0)


# ---------------------------------------------------------------------------
# perception proxies
# ---------------------------------------------------------------------------

class _EntryTable:
    """Per-obstacle occluded-corridor entry points on the obstacle's own timeline."""

    def __init__(self, scenario: Scenario):
        ref = scenario.reference
        self.items = []
        for ob in scenario.obstacles:
            st = ob.states
            s, d, _, _ = ref.project(st[:, 1], st[:, 2])
            s_entry = np.clip(s - 0.5 * ob.length, 0.0, ref.length)
            d_edge = np.sign(d) * np.maximum(0.0, np.abs(d) - 0.5 * ob.width)
            ex, ey = ref.position(s_entry, d_edge)
            self.items.append((ob, st[:, 0], np.asarray(ex), np.asarray(ey)))

    def at(self, times):
        """Entry points ``(M, N, 2)`` and presence mask ``(M, N)``."""
        times = np.asarray(times, dtype=float)
        pts = np.full((len(self.items), len(times), 2), np.nan)
        for i, (ob, t, ex, ey) in enumerate(self.items):
            inside = (times >= t[0] - 1e-9) & (times <= t[-1] + 1e-9)
            if len(t) == 1:
                pts[i, inside] = (ex[0], ey[0])
            else:
                pts[i, inside, 0] = np.interp(times[inside], t, ex)
                pts[i, inside, 1] = np.interp(times[inside], t, ey)
        return pts, ~np.isnan(pts[..., 0])


_ENTRY_CACHE = {}


def _entries(scenario):
    key = id(scenario)
    hit = _ENTRY_CACHE.get(key)
    if hit is None or hit[0] is not scenario:
        if len(_ENTRY_CACHE) > 64:
            _ENTRY_CACHE.clear()
        hit = (scenario, _EntryTable(scenario))
        _ENTRY_CACHE[key] = hit
    return hit[1]


def phantom_cost_matrix(scenario, times, x, y, theta, v):
    """Time-average of ``1 / (1 + clearance)`` to the nearest occluded corridor entry ahead.

    The clearance is the straight-line distance to the entry minus the
    stopping distance ``v * REACTION_TIME + v**2 / (2 * BRAKE_DECEL)``,
    floored at zero. Entries behind the ego or beyond sensor range are ignored.
    """
    x = np.atleast_2d(x)
    C, N = x.shape
    if not scenario.obstacles:
        return np.zeros(C)
    y, theta, v = np.atleast_2d(y), np.atleast_2d(theta), np.atleast_2d(v)
    pts, present = _entries(scenario).at(times)  # (M, N, 2)
    ex = pts[None, :, :, 0] - x[:, None, :]
    ey = pts[None, :, :, 1] - y[:, None, :]
    dist = np.hypot(ex, ey)
    ahead = (ex * np.cos(theta)[:, None, :] + ey * np.sin(theta)[:, None, :]) > 0.0
    valid = present[None] & ahead & (dist <= SENSOR_RANGE)
    stop = v * REACTION_TIME + v * v / (2.0 * BRAKE_DECEL)
    clear = np.maximum(0.0, np.where(valid, dist, np.inf) - stop[:, None, :])
    risk = np.max(1.0 / (1.0 + clear), axis=1)  # inf clearance -> 0
    return risk.mean(axis=-1)


_CORNER_SIGNS = np.array([(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)])


def _obstacle_edges(scenario, times):
    """Footprint edges of every obstacle at ``times``: ``(M, N, 4, 4)`` plus obstacle centres ``(M, N, 2)``.

    Rows are ``x1, y1, x2, y2``; NaN where the obstacle is absent.
    """
    times = np.asarray(times, dtype=float)
    M, N = len(scenario.obstacles), len(times)
    edges = np.full((M, N, 4, 4), np.nan)
    centres = np.full((M, N, 2), np.nan)
    for i, ob in enumerate(scenario.obstacles):
        st = ob.states_at(times)
        c, s = np.cos(st[:, 2])[:, None], np.sin(st[:, 2])[:, None]
        dx = 0.5 * ob.length * _CORNER_SIGNS[:, 0]
        dy = 0.5 * ob.width * _CORNER_SIGNS[:, 1]
        cx = st[:, 0:1] + c * dx - s * dy
        cy = st[:, 1:2] + s * dx + c * dy
        edges[i, :, :, 0], edges[i, :, :, 1] = cx, cy
        edges[i, :, :, 2], edges[i, :, :, 3] = np.roll(cx, -1, axis=1), np.roll(cy, -1, axis=1)
        centres[i] = st[:, :2]
    return edges, centres


def visibility_cost_matrix(scenario, times, x, y, stride=VISIBILITY_STRIDE):
    """Time-average occluded fraction of the sensor disc, sampled every ``stride`` states."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    C, N = x.shape
    if not scenario.obstacles:
        return np.zeros(C)
    cols = np.arange(0, N, stride)
    edges, centres = _obstacle_edges(scenario, np.asarray(times, dtype=float)[cols])
    total = np.zeros(C)
    for j, k in enumerate(cols):
        cx, cy = x[:, k].mean(), y[:, k].mean()
        spread = float(np.max(np.hypot(x[:, k] - cx, y[:, k] - cy)))
        gap = np.hypot(centres[:, j, 0] - cx, centres[:, j, 1] - cy)
        keep = np.flatnonzero(gap <= SENSOR_RANGE + spread + 10.0)  # NaN compares False
        if len(keep):
            total += kernels.occluded_fraction(x[:, k], y[:, k], edges[keep, j].reshape(-1, 4), SENSOR_RANGE, N_RAYS)
    return np.maximum(total / len(cols), 0.0)


def eval_perception_costs(traj: Trajectory, scenario: Scenario):
    """Phantom-risk and visibility proxies; both zero without obstacles."""
    phantom = phantom_cost_matrix(scenario, traj.t, traj.x, traj.y, traj.theta, traj.v)[0]
    vis = visibility_cost_matrix(scenario, traj.t, traj.x, traj.y)[0]
    return np.array([phantom, vis])


def eval_costs(traj: Trajectory, scenario: Scenario, v_desired, perception=True) -> CostVector:
    kin = eval_kinematic_costs(traj, scenario, v_desired)
    ext = eval_perception_costs(traj, scenario) if perception else np.zeros(2)
    return CostVector(tuple(kin), tuple(ext))
