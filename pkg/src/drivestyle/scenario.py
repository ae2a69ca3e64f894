"""Scenario model: reference paths, obstacles, Frenet conversion and a synthetic corpus."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from . import kernels

EGO_LENGTH = 4.5
EGO_WIDTH = 2.0
RESAMPLE_SPACING = 0.5
MAX_PROJECTION_DISTANCE = 50.0
EXTENT_MARGIN = 1.0
SCENARIO_KINDS = ("straight", "curve", "lane-obstacle", "crossing")


class ScenarioError(ValueError):
    """Schema or invariant violation; ``path`` points at the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class FrenetError(ValueError):
    pass


def wrap_angle(theta):
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2.0 * np.pi)


@dataclass(frozen=True)
class TrajState:
    t: float
    x: float
    y: float
    v: float
    a: float
    theta: float

    def __post_init__(self):
        vals = (self.t, self.x, self.y, self.v, self.a, self.theta)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite TrajState {vals}")
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))

    def as_dict(self):
        return {"t": self.t, "x": self.x, "y": self.y, "v": self.v, "a": self.a, "theta": self.theta}

    def as_array(self):
        return np.array([self.t, self.x, self.y, self.v, self.a, self.theta])


COLUMNS = ("t", "x", "y", "v", "a", "theta")


class Trajectory:
    """Uniformly sampled kinematic state sequence stored as an ``(N, 6)`` array.

    Columns follow :data:`COLUMNS`.
    """

    __slots__ = ("dt", "data")

    def __init__(self, dt, data):
        data = np.array(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != 6:
            raise ValueError("trajectory data must be (N, 6)")
        if data.shape[0] < 2:
            raise ValueError("trajectory needs at least 2 states")
        if not np.all(np.isfinite(data)):
            raise ValueError("trajectory contains non-finite values")
        if dt <= 0:
            raise ValueError("dt must be positive")
        if np.any(np.abs(np.diff(data[:, 0]) - dt) > 1e-9):
            raise ValueError("timestamps are not uniformly spaced by dt")
        data[:, 5] = wrap_angle(data[:, 5])
        data.setflags(write=False)
        self.dt = float(dt)
        self.data = data

    @classmethod
    def from_states(cls, states: Sequence[TrajState], dt=None):
        arr = np.array([s.as_array() for s in states])
        if dt is None:
            dt = float(arr[1, 0] - arr[0, 0])
        return cls(dt, arr)

    def __len__(self):
        return self.data.shape[0]

    def __eq__(self, other):
        return isinstance(other, Trajectory) and self.dt == other.dt and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"Trajectory(dt={self.dt}, n={len(self)})"

    t = property(lambda self: self.data[:, 0])
    x = property(lambda self: self.data[:, 1])
    y = property(lambda self: self.data[:, 2])
    v = property(lambda self: self.data[:, 3])
    a = property(lambda self: self.data[:, 4])
    theta = property(lambda self: self.data[:, 5])

    @property
    def duration(self):
        return (len(self) - 1) * self.dt

    @property
    def states(self):
        return [TrajState(*row) for row in self.data.tolist()]

    def state(self, i):
        return TrajState(*self.data[i].tolist())

    def kinematic(self):
        """``(N, 5)`` array of ``x, y, v, a, theta``."""
        return self.data[:, 1:]


# ---------------------------------------------------------------------------
# reference path
# ---------------------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


def _arc_integral(spline, u0, u1):
    """Arc length of ``spline`` between parameter arrays ``u0`` and ``u1``."""
    u0 = np.asarray(u0, dtype=float)
    u1 = np.asarray(u1, dtype=float)
    half = 0.5 * (u1 - u0)
    mid = 0.5 * (u1 + u0)
    nodes = mid[..., None] + half[..., None] * _GL_X
    d = spline(nodes, 1)
    speed = np.hypot(d[..., 0], d[..., 1])
    return half * (speed * _GL_W).sum(axis=-1)


def _clean_points(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ScenarioError("reference.points", "need at least two [x, y] points")
    if not np.all(np.isfinite(pts)):
        raise ScenarioError("reference.points", "non-finite coordinate")
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.hypot(*np.diff(pts, axis=0).T) > 1e-9
    pts = pts[keep]
    if len(pts) < 2:
        raise ScenarioError("reference.points", "degenerate path (all points identical)")
    if len(pts) < 4:
        # densify short polylines so the not-a-knot spline stays well posed
        out = [pts[0]]
        for a, b in zip(pts[:-1], pts[1:]):
            for f in (1 / 3, 2 / 3, 1.0):
                out.append(a + f * (b - a))
        pts = np.array(out)
    return pts


class ReferencePath:
    """Cubic-spline reference path resampled at uniform arc length.

    ``points``, ``arclen`` and ``curvature`` describe the resampled path; the
    spline is parameterised by arc length so ``s`` is metric.
    """

    def __init__(self, points, spacing=RESAMPLE_SPACING):
        self.raw_points = np.array(points, dtype=float)
        pts = _clean_points(points)
        chord = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
        first = CubicSpline(chord, pts, axis=0)

        # true arc length on a fine grid of the first spline
        sub = max(2, int(np.ceil(chord[-1] / (0.25 * spacing))))
        ugrid = np.linspace(0.0, chord[-1], sub + 1)
        sgrid = np.concatenate([[0.0], np.cumsum(_arc_integral(first, ugrid[:-1], ugrid[1:]))])
        length = sgrid[-1]
        n = max(2, int(np.ceil(length / spacing - 1e-9)))
        targets = np.linspace(0.0, length, n + 1)
        u = np.interp(targets, sgrid, ugrid)
        for _ in range(3):
            k = np.clip(np.searchsorted(ugrid, u, side="right") - 1, 0, len(ugrid) - 2)
            s_u = sgrid[k] + _arc_integral(first, ugrid[k], u)
            speed = np.hypot(*first(u, 1).T)
            u = np.clip(u - (s_u - targets) / speed, 0.0, chord[-1])
        samples = first(u)

        self.spline = CubicSpline(targets, samples, axis=0)
        self.points = samples
        self.arclen = targets
        self.length = float(targets[-1])
        self._d1 = self.spline.derivative(1)
        self._d2 = self.spline.derivative(2)
        self._d3 = self.spline.derivative(3)
        self.curvature = self.frame(targets)[3]
        for arr in (self.points, self.arclen, self.curvature, self.raw_points):
            arr.setflags(write=False)

    def __eq__(self, other):
        return isinstance(other, ReferencePath) and np.array_equal(self.raw_points, other.raw_points)

    def __repr__(self):
        return f"ReferencePath(length={self.length:.3f}, n={len(self.arclen)})"

    def frame(self, s):
        """Position, heading, curvature and curvature rate at arc length ``s``."""
        s = np.asarray(s, dtype=float)
        p = self.spline(s)
        d1 = self._d1(s)
        d2 = self._d2(s)
        d3 = self._d3(s)
        xd, yd = d1[..., 0], d1[..., 1]
        xdd, ydd = d2[..., 0], d2[..., 1]
        num = xd * ydd - yd * xdd
        sp2 = xd * xd + yd * yd
        den = sp2 ** 1.5
        kappa = num / den
        dnum = xd * d3[..., 1] - yd * d3[..., 0]
        dden = 3.0 * np.sqrt(sp2) * (xd * xdd + yd * ydd)
        dkappa = (dnum * den - num * dden) / (den * den)
        heading = np.arctan2(yd, xd)
        return p[..., 0], p[..., 1], heading, kappa, dkappa

    def position(self, s, d=0.0):
        x, y, h, _, _ = self.frame(s)
        return x - np.asarray(d) * np.sin(h), y + np.asarray(d) * np.cos(h)

    def project(self, x, y):
        """Vectorised projection; returns ``(s, d, distance_to_polyline)``."""
        px = np.atleast_1d(np.asarray(x, dtype=float))
        py = np.atleast_1d(np.asarray(y, dtype=float))
        idx, t, dist = kernels.polyline_nearest(px, py, self.points[:, 0], self.points[:, 1])
        s = self.arclen[idx] + t * (self.arclen[idx + 1] - self.arclen[idx])
        for _ in range(30):
            p = self.spline(s)
            d1 = self._d1(s)
            d2 = self._d2(s)
            rx = p[:, 0] - px
            ry = p[:, 1] - py
            f = rx * d1[:, 0] + ry * d1[:, 1]
            fp = d1[:, 0] ** 2 + d1[:, 1] ** 2 + rx * d2[:, 0] + ry * d2[:, 1]
            step = f / np.where(np.abs(fp) > 1e-12, fp, 1e-12)
            s_new = np.clip(s - step, 0.0, self.length)
            done = np.max(np.abs(s_new - s)) < 1e-13
            s = s_new
            if done:
                break
        p = self.spline(s)
        d1 = self._d1(s)
        norm = np.hypot(d1[:, 0], d1[:, 1])
        tx, ty = d1[:, 0] / norm, d1[:, 1] / norm
        ex, ey = px - p[:, 0], py - p[:, 1]
        d = tx * ey - ty * ex
        along = tx * ex + ty * ey
        return s, d, dist, along


def project_to_frenet(reference: ReferencePath, point):
    """Project a Cartesian point onto the reference path; returns ``(s, d)``.

    ``d`` is positive to the left of the direction of travel.
    """
    s, d, dist, along = reference.project([point[0]], [point[1]])
    if dist[0] > MAX_PROJECTION_DISTANCE:
        raise FrenetError(f"point {tuple(point)} is {dist[0]:.2f} m from the path (limit {MAX_PROJECTION_DISTANCE} m)")
    if (s[0] <= 0.0 and along[0] < -EXTENT_MARGIN) or (s[0] >= reference.length and along[0] > EXTENT_MARGIN):
        raise FrenetError(f"point {tuple(point)} lies beyond the path extent")
    return float(s[0]), float(d[0])


def frenet_to_cartesian_arrays(reference: ReferencePath, frenet):
    """Convert ``(..., 6)`` Frenet states ``s, d, s_dot, d_dot, s_ddot, d_ddot``.

    Lateral derivatives are time derivatives. Returns arrays
    ``x, y, v, a, theta`` with the leading shape of ``frenet``.
    """
    f = np.asarray(frenet, dtype=float)
    s, d, sd, dd, sdd, ddd = (f[..., i] for i in range(6))
    rx, ry, h, k, dk = reference.frame(s)
    one = 1.0 - k * d
    vt = sd * one
    vn = dd
    at = sdd * one - sd * sd * dk * d - 2.0 * k * sd * dd
    an = k * sd * sd * one + ddd
    v = np.hypot(vt, vn)
    moving = v > 1e-9
    safe_v = np.where(moving, v, 1.0)
    a = np.where(moving, (vt * at + vn * an) / safe_v, at)
    theta = wrap_angle(h + np.where(moving, np.arctan2(vn, vt), 0.0))
    x = rx - d * np.sin(h)
    y = ry + d * np.cos(h)
    return x, y, v, a, theta, one


def frenet_to_cartesian(reference: ReferencePath, frenet_states, dt, t0=0.0) -> Trajectory:
    """Convert a Frenet state sequence to a Cartesian :class:`Trajectory`."""
    f = np.asarray(frenet_states, dtype=float).reshape(-1, 6)
    s = f[:, 0]
    if np.any(s < -1e-9) or np.any(s > reference.length + 1e-9):
        bad = int(np.flatnonzero((s < -1e-9) | (s > reference.length + 1e-9))[0])
        raise FrenetError(f"state {bad}: s={s[bad]:.3f} outside path extent [0, {reference.length:.3f}]")
    x, y, v, a, theta, one = frenet_to_cartesian_arrays(reference, f)
    if np.any(one <= 0.0):
        bad = int(np.flatnonzero(one <= 0.0)[0])
        raise FrenetError(f"state {bad}: singular conversion, |d*kappa| >= 1")
    t = t0 + dt * np.arange(len(f))
    return Trajectory(dt, np.column_stack([t, x, y, v, a, theta]))


# ---------------------------------------------------------------------------
# obstacles and scenarios
# ---------------------------------------------------------------------------

def _id_key(ident):
    if isinstance(ident, (int, np.integer)):
        return (0, int(ident), "")
    return (1, 0, str(ident))


@dataclass(frozen=True, eq=False)
class Obstacle:
    id: object
    length: float
    width: float
    states: np.ndarray  # (K, 5): t, x, y, theta, v

    def __post_init__(self):
        st = np.array(self.states, dtype=float).reshape(-1, 5)
        st.setflags(write=False)
        object.__setattr__(self, "states", st)
        object.__setattr__(self, "_theta_unwrapped", np.unwrap(st[:, 3]))

    def __eq__(self, other):
        return (
            isinstance(other, Obstacle)
            and self.id == other.id
            and self.length == other.length
            and self.width == other.width
            and np.array_equal(self.states, other.states)
        )

    @property
    def sort_key(self):
        return _id_key(self.id)

    @property
    def is_static(self):
        return bool(np.all(np.abs(self.states[:, 4]) < 1e-9))

    def states_at(self, times):
        """Interpolated ``x, y, theta, v`` at ``times``; NaN outside the sampled span."""
        times = np.asarray(times, dtype=float)
        st = self.states
        out = np.full(times.shape + (4,), np.nan)
        inside = (times >= st[0, 0] - 1e-9) & (times <= st[-1, 0] + 1e-9)
        if len(st) == 1:
            out[inside] = st[0, 1:]
            return out
        tt = np.clip(times[inside], st[0, 0], st[-1, 0])
        theta = self._theta_unwrapped
        out[inside, 0] = np.interp(tt, st[:, 0], st[:, 1])
        out[inside, 1] = np.interp(tt, st[:, 0], st[:, 2])
        out[inside, 2] = wrap_angle(np.interp(tt, st[:, 0], theta))
        out[inside, 3] = np.interp(tt, st[:, 0], st[:, 4])
        return out


@dataclass(frozen=True)
class Goal:
    x: float
    y: float
    radius: float

    def contains(self, x, y):
        return math.hypot(x - self.x, y - self.y) <= self.radius


@dataclass(frozen=True, eq=False)
class Scenario:
    id: str
    reference: ReferencePath
    obstacles: tuple
    ego_init: TrajState
    goal: Goal
    duration: float
    dt_sim: float
    v_desired: float | None = None
    meta: dict = field(default_factory=dict)

    def __eq__(self, other):
        return isinstance(other, Scenario) and serialize_scenario(self) == serialize_scenario(other)

    @property
    def desired_speed(self):
        return self.ego_init.v if self.v_desired is None else self.v_desired


# ---------------------------------------------------------------------------
# schema I/O
# ---------------------------------------------------------------------------

def _num(doc, key, path):
    if key not in doc:
        raise ScenarioError(f"{path}.{key}" if path else key, "missing field")
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ScenarioError(f"{path}.{key}" if path else key, f"expected number, got {type(val).__name__}")
    if not math.isfinite(val):
        raise ScenarioError(f"{path}.{key}" if path else key, "non-finite number")
    return float(val)


def _obj(doc, key, path=""):
    full = f"{path}.{key}" if path else key
    if key not in doc:
        raise ScenarioError(full, "missing field")
    if not isinstance(doc[key], dict):
        raise ScenarioError(full, f"expected object, got {type(doc[key]).__name__}")
    return doc[key]


def _rows(val, width, path):
    if not isinstance(val, list):
        raise ScenarioError(path, f"expected array, got {type(val).__name__}")
    for i, row in enumerate(val):
        if not isinstance(row, list) or len(row) != width:
            raise ScenarioError(f"{path}[{i}]", f"expected array of {width} numbers")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ScenarioError(f"{path}[{i}][{j}]", "expected finite number")
    return np.array(val, dtype=float).reshape(-1, width)


def scenario_from_dict(doc) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("$", "scenario document must be an object")
    if "id" not in doc or not isinstance(doc["id"], str):
        raise ScenarioError("id", "missing or non-string id")
    ref = _obj(doc, "reference")
    if "points" not in ref:
        raise ScenarioError("reference.points", "missing field")
    pts = _rows(ref["points"], 2, "reference.points")
    reference = ReferencePath(pts)

    if "obstacles" not in doc or not isinstance(doc["obstacles"], list):
        raise ScenarioError("obstacles", "missing or non-array field")
    obstacles = []
    seen = set()
    for i, ob in enumerate(doc["obstacles"]):
        path = f"obstacles[{i}]"
        if not isinstance(ob, dict):
            raise ScenarioError(path, "expected object")
        if "id" not in ob or isinstance(ob["id"], bool) or not isinstance(ob["id"], (int, str)):
            raise ScenarioError(f"{path}.id", "missing or invalid identifier")
        if ob["id"] in seen:
            raise ScenarioError(f"{path}.id", f"duplicate obstacle id {ob['id']!r}")
        seen.add(ob["id"])
        length = _num(ob, "length", path)
        width = _num(ob, "width", path)
        if length <= 0 or width <= 0:
            raise ScenarioError(f"{path}.length" if length <= 0 else f"{path}.width", "zero-size obstacle")
        if "states" not in ob:
            raise ScenarioError(f"{path}.states", "missing field")
        st = _rows(ob["states"], 5, f"{path}.states")
        if len(st) == 0:
            raise ScenarioError(f"{path}.states", "obstacle needs at least one state")
        if np.any(np.diff(st[:, 0]) <= 0):
            k = int(np.flatnonzero(np.diff(st[:, 0]) <= 0)[0]) + 1
            raise ScenarioError(f"{path}.states[{k}]", "non-increasing timestamps")
        obstacles.append(Obstacle(ob["id"], length, width, st))

    ego = _obj(doc, "ego_init")
    ego_init = TrajState(*(_num(ego, k, "ego_init") for k in COLUMNS))
    goal_doc = _obj(doc, "goal")
    goal = Goal(_num(goal_doc, "x", "goal"), _num(goal_doc, "y", "goal"), _num(goal_doc, "radius", "goal"))
    if goal.radius <= 0:
        raise ScenarioError("goal.radius", "must be positive")
    duration = _num(doc, "duration", "")
    dt_sim = _num(doc, "dt_sim", "")
    if duration <= 0:
        raise ScenarioError("duration", "must be positive")
    if dt_sim <= 0:
        raise ScenarioError("dt_sim", "must be positive")
    v_desired = None
    if "v_desired" in doc:
        v_desired = _num(doc, "v_desired", "")
        if v_desired < 0:
            raise ScenarioError("v_desired", "must be non-negative")
    _, d, dist, along = reference.project([ego_init.x], [ego_init.y])
    if abs(d[0]) > 5.0 or abs(along[0]) > 5.0 or dist[0] > 5.0 + 1e-6:
        raise ScenarioError("ego_init", f"ego lies {dist[0]:.2f} m from the reference path (limit 5 m)")
    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise ScenarioError("meta", "expected object")
    return Scenario(doc["id"], reference, tuple(obstacles), ego_init, goal, duration, dt_sim, v_desired, dict(meta))


def load_scenario(document: str) -> Scenario:
    """Parse and validate a scenario JSON document."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"invalid JSON: {exc}") from None
    return scenario_from_dict(doc)


def scenario_to_dict(sc: Scenario):
    doc = {
        "id": sc.id,
        "reference": {"points": sc.reference.raw_points.tolist()},
        "obstacles": [
            {"id": ob.id, "length": ob.length, "width": ob.width, "states": ob.states.tolist()} for ob in sc.obstacles
        ],
        "ego_init": sc.ego_init.as_dict(),
        "goal": {"x": sc.goal.x, "y": sc.goal.y, "radius": sc.goal.radius},
        "duration": sc.duration,
        "dt_sim": sc.dt_sim,
    }
    if sc.v_desired is not None:
        doc["v_desired"] = sc.v_desired
    if sc.meta:
        doc["meta"] = sc.meta
    return doc


def serialize_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), separators=(",", ":"))


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------

PARKED_OFFSET = 5.2
HORIZON_MARGIN = 6.0


def _along_path_states(ref, s0, speed, d, times, reverse=False):
    s = np.clip(s0 + speed * times, 0.0, ref.length)
    x, y, h, _, _ = ref.frame(s)
    x = x - d * np.sin(h)
    y = y + d * np.cos(h)
    heading = wrap_angle(h + (np.pi if reverse else 0.0))
    return np.column_stack([times, x, y, heading, np.full_like(times, abs(speed))])


def _parked(ref, s, side, times, ident, rng):
    length = float(rng.uniform(4.2, 5.0))
    st = _along_path_states(ref, s, 0.0, side * PARKED_OFFSET, times)
    return {"id": ident, "length": round(length, 3), "width": 1.9, "states": np.round(st, 4).tolist()}


def _polyline(rng, kind, total):
    heading = float(rng.uniform(-np.pi, np.pi))
    if kind == "curve":
        lead = 25.0
        radius = float(rng.uniform(70.0, 120.0))
        turn = float(rng.uniform(np.pi / 3, 2 * np.pi / 3)) * (1 if rng.random() < 0.5 else -1)
        arc_len = abs(turn) * radius
        pts = [(0.0, 0.0)]
        for s in np.arange(2.0, lead + 1e-9, 2.0):
            pts.append((s, 0.0))
        n_arc = max(8, int(arc_len / 2.0))
        sign = np.sign(turn)
        for k in range(1, n_arc + 1):
            ang = turn * k / n_arc
            pts.append((lead + radius * math.sin(abs(ang)), sign * radius * (1 - math.cos(ang))))
        end = np.array(pts[-1])
        dirv = np.array([math.cos(turn), math.sin(turn)])
        rest = max(20.0, total - lead - arc_len)
        for s in np.arange(2.0, rest + 1e-9, 2.0):
            pts.append(tuple(end + s * dirv))
        pts = np.array(pts)
    else:
        pts = np.column_stack([np.linspace(0.0, total, 5), np.zeros(5)])
    c, s = math.cos(heading), math.sin(heading)
    rot = np.array([[c, -s], [s, c]])
    origin = rng.uniform(-500.0, 500.0, size=2)
    return pts @ rot.T + origin


def generate_synthetic_scenario(kind: str, seed: int) -> Scenario:
    """Deterministic synthetic scenario of the given kind."""
    if kind not in SCENARIO_KINDS:
        raise ValueError(f"unknown scenario kind {kind!r}; expected one of {SCENARIO_KINDS}")
    ss = np.random.SeedSequence([int(seed) % (2**64), SCENARIO_KINDS.index(kind)])
    rng = np.random.default_rng(ss)
    v_des = round(float(rng.uniform(9.0, 13.0)), 2)
    duration = round(float(rng.uniform(10.0, 30.0)), 1)
    dt_sim = 0.1
    total = 1.45 * v_des * (duration + HORIZON_MARGIN) + 60.0
    pts = _polyline(rng, kind, total)
    ref = ReferencePath(pts)
    times = np.round(np.arange(0.0, duration + HORIZON_MARGIN + 1e-9, dt_sim), 4)

    s_ego = 5.0
    if kind == "straight":
        v0 = v_des
    else:
        v0 = round(v_des * float(rng.uniform(0.45, 0.75)), 2)
    ex, ey, eh, _, _ = ref.frame(s_ego)
    ego = TrajState(0.0, float(ex), float(ey), v0, 0.0, float(eh))

    obstacles = []
    if kind != "straight":
        side = 1 if rng.random() < 0.5 else -1
        s = s_ego + float(rng.uniform(15.0, 30.0))
        n = 0
        while s < min(ref.length - 10.0, s_ego + 1.3 * v_des * duration):
            obstacles.append(_parked(ref, s, side, times, 100 + n, rng))
            n += 1
            s += float(rng.uniform(25.0, 45.0))
        if kind == "curve":
            v_on = float(rng.uniform(6.0, 10.0))
            s0 = min(ref.length, s_ego + float(rng.uniform(80.0, 140.0)))
            st = _along_path_states(ref, s0, -v_on, 3.5, times, reverse=True)
            obstacles.append({"id": 1, "length": 4.6, "width": 1.9, "states": np.round(st, 4).tolist()})
        elif kind == "lane-obstacle":
            v_lead = float(rng.uniform(2.0, 5.0))
            s0 = s_ego + float(rng.uniform(25.0, 40.0))
            st = _along_path_states(ref, s0, v_lead, 0.0, times)
            obstacles.append({"id": 1, "length": 4.8, "width": 2.0, "states": np.round(st, 4).tolist()})
        else:  # crossing
            s_c = s_ego + float(rng.uniform(45.0, 75.0))
            v_c = float(rng.uniform(4.0, 8.0))
            t_cross = (s_c - s_ego) / max(v0, 1.0)
            cx, cy, ch, _, _ = ref.frame(s_c)
            nx, ny = -math.sin(ch), math.cos(ch)
            # crosser starts on the parked side and passes the centreline at t_cross
            lateral = side * (t_cross * v_c - v_c * times)
            st = np.column_stack(
                [
                    times,
                    cx + nx * -lateral,
                    cy + ny * -lateral,
                    np.full_like(times, float(wrap_angle(ch - side * np.pi / 2))),
                    np.full_like(times, v_c),
                ]
            )
            keep = np.abs(lateral) < 40.0
            if keep.sum() < 2:
                keep[:2] = True
            obstacles.append({"id": 1, "length": 4.5, "width": 1.9, "states": np.round(st[keep], 4).tolist()})
            obstacles.append(_parked(ref, s_c - 8.0, side, times, 99, rng))

    s_goal = min(ref.length - 5.0, s_ego + 0.9 * v_des * duration)
    gx, gy, _, _, _ = ref.frame(s_goal)
    doc = {
        "id": f"synthetic-{kind}-{int(seed) % (2**64)}",
        "reference": {"points": pts.tolist()},
        "obstacles": obstacles,
        "ego_init": ego.as_dict(),
        "goal": {"x": round(float(gx), 4), "y": round(float(gy), 4), "radius": 6.0},
        "duration": duration,
        "dt_sim": dt_sim,
        "v_desired": v_des,
    }
    return scenario_from_dict(json.loads(json.dumps(doc)))
