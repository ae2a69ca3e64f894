"""Frenet end-state sampling, polynomial candidates and the kinematic feasibility gate."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .scenario import (
    EGO_LENGTH,
    EGO_WIDTH,
    Scenario,
    TrajState,
    Trajectory,
    frenet_to_cartesian_arrays,
    wrap_angle,
)

REASONS = ("accel", "curvature", "yaw_rate", "speed")
GATE_REASONS = REASONS + ("out_of_path", "collision")
DS_FLOOR = 1e-6
# Candidate clearances are only resolved up to this distance; it must exceed
# the obstacle-cost safety radius so the cost term is unaffected.
CLEARANCE_CAP = 10.0


@dataclass(frozen=True)
class FeasibilityLimits:
    a_max: float = 8.0
    kappa_max: float = 0.2
    yaw_rate_max: float = 1.0
    v_max: float = 36.0

    def __post_init__(self):
        for name in ("a_max", "kappa_max", "yaw_rate_max", "v_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class SamplerConfig:
    lateral_offsets: tuple
    target_speeds: tuple
    horizons: tuple = (2.0, 3.0, 4.0)
    dt: float = 0.1
    limits: FeasibilityLimits = field(default_factory=FeasibilityLimits)
    output_horizon: float | None = 5.0

    def __post_init__(self):
        lat = tuple(float(v) for v in self.lateral_offsets)
        spd = tuple(float(v) for v in self.target_speeds)
        hor = tuple(float(v) for v in self.horizons)
        if not lat or list(lat) != sorted(lat):
            raise ValueError("lateral_offsets must be non-empty and sorted")
        if not spd or min(spd) < 0:
            raise ValueError("target_speeds must be non-empty and non-negative")
        if not hor or min(hor) <= 0:
            raise ValueError("horizons must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        for T in hor:
            if abs(T / self.dt - round(T / self.dt)) > 1e-9:
                raise ValueError(f"dt={self.dt} does not divide horizon {T}")
        if self.output_horizon is not None and self.output_horizon < max(hor) - 1e-9:
            raise ValueError("output_horizon must cover every maneuver horizon")
        object.__setattr__(self, "lateral_offsets", lat)
        object.__setattr__(self, "target_speeds", spd)
        object.__setattr__(self, "horizons", hor)

    @classmethod
    def default(cls, v_ref, **overrides):
        """11 offsets in [-3, 3] m, 7 speeds in [0, 1.2 v_ref], horizons 2/3/4 s."""
        params = dict(
            lateral_offsets=tuple(np.linspace(-3.0, 3.0, 11).round(12)),
            target_speeds=tuple(v_ref * f for f in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2)),
        )
        params.update(overrides)
        return cls(**params)


class FrenetState(NamedTuple):
    s: float
    d: float
    s_d: float = 0.0
    d_d: float = 0.0
    s_dd: float = 0.0
    d_dd: float = 0.0


class FeasibilityResult(NamedTuple):
    feasible: bool
    reason: str | None


@dataclass(eq=False)
class FrenetCandidate:
    lat_coeffs: np.ndarray
    lon_coeffs: np.ndarray
    T: float
    end: tuple
    frenet: np.ndarray  # (N, 6): s, d, s_d, d_d, s_dd, d_dd
    dt: float
    cartesian: Trajectory | None = None
    feasible: bool = True
    infeasibility_reason: str | None = None
    clearance: np.ndarray | None = None  # min footprint distance per state

    def frenet_state(self, i):
        return FrenetState(*self.frenet[i].tolist())


def quintic_coefficients(x0, v0, a0, x1, v1, a1, T):
    """Coefficients (ascending powers) of the quintic hitting both boundary triples."""
    c0, c1, c2 = x0, v0, 0.5 * a0
    h = x1 - (c0 + c1 * T + c2 * T * T)
    g = v1 - (c1 + 2.0 * c2 * T)
    q = a1 - 2.0 * c2
    c3 = (10.0 * h - 4.0 * g * T + 0.5 * q * T * T) / T**3
    c4 = (-15.0 * h + 7.0 * g * T - q * T * T) / T**4
    c5 = (6.0 * h - 3.0 * g * T + 0.5 * q * T * T) / T**5
    return np.array([c0, c1, c2, c3, c4, c5])


def quartic_coefficients(x0, v0, a0, v1, a1, T):
    """Velocity-keeping quartic: end speed and acceleration fixed, end position free."""
    c0, c1, c2 = x0, v0, 0.5 * a0
    g = v1 - (c1 + 2.0 * c2 * T)
    q = a1 - 2.0 * c2
    c3 = (3.0 * g - q * T) / (3.0 * T * T)
    c4 = (q * T - 2.0 * g) / (4.0 * T**3)
    return np.array([c0, c1, c2, c3, c4])


def _poly_eval(coeffs, t, order):
    """Value and first two derivatives of ascending-power polynomials.

    ``coeffs`` is ``(C, order+1)``, ``t`` is ``(C, N)``.
    """
    n = order + 1
    val = np.zeros_like(t)
    d1 = np.zeros_like(t)
    d2 = np.zeros_like(t)
    for k in range(n - 1, -1, -1):
        c = coeffs[:, k : k + 1]
        val = val * t + c
    for k in range(n - 1, 0, -1):
        d1 = d1 * t + k * coeffs[:, k : k + 1]
    for k in range(n - 1, 1, -1):
        d2 = d2 * t + k * (k - 1) * coeffs[:, k : k + 1]
    return val, d1, d2


def sample_end_states(config: SamplerConfig, ego_frenet=None):
    """All ``(d_target, s_dot_target, T)`` in lexicographic order."""
    return list(
        itertools.product(sorted(config.lateral_offsets), sorted(config.target_speeds), sorted(config.horizons))
    )


def _steps(T, dt):
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9:
        raise ValueError(f"horizon {T} is not an integral multiple of dt={dt}")
    return n


def _frenet_batch(ego: FrenetState, ends, dt, horizon):
    """Evaluate all candidates on a shared time grid ``0..horizon``."""
    ends = np.asarray(ends, dtype=float).reshape(-1, 3)
    n = _steps(horizon, dt)
    t = dt * np.arange(n + 1)
    lat = np.array([quintic_coefficients(ego.d, ego.d_d, ego.d_dd, d1, 0.0, 0.0, T) for d1, _, T in ends])
    lon = np.array([quartic_coefficients(ego.s, ego.s_d, ego.s_dd, v1, 0.0, T) for _, v1, T in ends])
    T = ends[:, 2:3]
    tc = np.minimum(t[None, :], T)
    d, dd, ddd = _poly_eval(lat, tc, 5)
    s, sd, sdd = _poly_eval(lon, tc, 4)
    after = t[None, :] > T
    tail = np.where(after, t[None, :] - T, 0.0)
    # past T the maneuver holds its end state: constant offset and speed
    dd = np.where(after, 0.0, dd)
    ddd = np.where(after, 0.0, ddd)
    sdd = np.where(after, 0.0, sdd)
    s = s + sd * tail
    return lat, lon, np.stack([s, d, sd, dd, sdd, ddd], axis=-1)


def build_candidate(ego_frenet, end, dt, horizon=None) -> FrenetCandidate:
    """Quintic lateral / quartic longitudinal candidate sampled at ``k*dt``.

    With ``horizon`` beyond ``T`` the end state is held (constant offset and speed).
    """
    ego = FrenetState(*ego_frenet)
    d_target, v_target, T = (float(v) for v in end)
    if T <= 2.0 * dt:
        raise ValueError(f"degenerate horizon T={T} <= 2*dt")
    _steps(T, dt)
    horizon = T if horizon is None else float(horizon)
    lat, lon, fr = _frenet_batch(ego, [(d_target, v_target, T)], dt, horizon)
    return FrenetCandidate(lat[0], lon[0], T, (d_target, v_target, T), fr[0], dt)


def path_curvature(traj: Trajectory):
    """Discrete curvature from consecutive headings over travelled distance."""
    dth = wrap_angle(np.diff(traj.theta))
    ds = np.maximum(np.hypot(np.diff(traj.x), np.diff(traj.y)), DS_FLOOR)
    return dth / ds


def _violations(x, y, v, a, theta, dt, limits):
    """Boolean flags per reason for batched ``(C, N)`` arrays."""
    dth = wrap_angle(np.diff(theta, axis=-1))
    ds = np.maximum(np.hypot(np.diff(x, axis=-1), np.diff(y, axis=-1)), DS_FLOOR)
    return {
        "accel": np.any(np.abs(a) > limits.a_max, axis=-1),
        "curvature": np.any(np.abs(dth / ds) > limits.kappa_max, axis=-1),
        "yaw_rate": np.any(np.abs(dth / dt) > limits.yaw_rate_max, axis=-1),
        "speed": np.any((v < 0.0) | (v > limits.v_max), axis=-1),
    }


def check_feasibility(candidate, limits: FeasibilityLimits) -> FeasibilityResult:
    """Kinematic gate; the reason is the first violated bound in ``REASONS`` order."""
    traj = candidate.cartesian if isinstance(candidate, FrenetCandidate) else candidate
    if traj is None:
        raise ValueError("candidate has no cartesian trajectory")
    flags = _violations(traj.x, traj.y, traj.v, traj.a, traj.theta, traj.dt, limits)
    for reason in REASONS:
        if flags[reason]:
            return FeasibilityResult(False, reason)
    return FeasibilityResult(True, None)


def ego_to_frenet(scenario: Scenario, ego: TrajState) -> FrenetState:
    """Approximate curvilinear state of a Cartesian ego state."""
    ref = scenario.reference
    s, d, dist, _ = ref.project([ego.x], [ego.y])
    s, d = float(s[0]), float(d[0])
    _, _, h, k, _ = ref.frame(s)
    delta = float(wrap_angle(ego.theta - h))
    one = 1.0 - float(k) * d
    return FrenetState(
        s,
        d,
        ego.v * np.cos(delta) / one,
        ego.v * np.sin(delta),
        ego.a * np.cos(delta),
        ego.a * np.sin(delta),
    )


def obstacle_clearance(scenario: Scenario, times, x, y, theta, reach=None, cap=None):
    """Minimum footprint distance from the ego to any obstacle, per ``(C, N)`` state.

    ``inf`` where no obstacle exists at that time. With ``cap`` the result is
    ``min(distance, cap)``; pairs whose bounding circles are already ``cap``
    apart skip the exact footprint test.
    """
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    theta = np.atleast_2d(theta)
    C, N = x.shape
    out = np.full((C, N), np.inf)
    if not scenario.obstacles or C == 0:
        return out
    cx, cy = x[:, 0].mean(), y[:, 0].mean()
    if reach is None:
        reach = float(np.max(np.hypot(x - cx, y - cy))) + 40.0
    for ob in scenario.obstacles:
        st = ob.states_at(times)  # (N, 4)
        present = ~np.isnan(st[:, 0])
        if not present.any():
            continue
        near = present & (np.hypot(np.nan_to_num(st[:, 0]) - cx, np.nan_to_num(st[:, 1]) - cy) < reach)
        if not near.any():
            continue
        cols = np.flatnonzero(near)
        ox = np.broadcast_to(st[cols, 0], (C, len(cols)))
        oy = np.broadcast_to(st[cols, 1], (C, len(cols)))
        oth = np.broadcast_to(st[cols, 2], (C, len(cols)))
        ex, ey, eth = x[:, cols], y[:, cols], theta[:, cols]
        dist = np.full((C, len(cols)), np.inf if cap is None else float(cap))
        if cap is None:
            todo = np.ones(dist.shape, dtype=bool)
        else:
            radii = 0.5 * (np.hypot(EGO_LENGTH, EGO_WIDTH) + np.hypot(ob.length, ob.width))
            todo = np.hypot(ex - ox, ey - oy) - radii < cap
        n = int(todo.sum())
        if n:
            dist[todo] = kernels.rect_distance(
                ex[todo],
                ey[todo],
                eth[todo],
                np.full(n, EGO_LENGTH),
                np.full(n, EGO_WIDTH),
                ox[todo],
                oy[todo],
                oth[todo],
                np.full(n, ob.length),
                np.full(n, ob.width),
            )
        out[:, cols] = np.minimum(out[:, cols], dist)
    if cap is not None:
        out = np.minimum(out, cap)
    return out


def generate_candidates(scenario: Scenario, ego: TrajState, config: SamplerConfig, ego_frenet=None):
    """Build every candidate, convert to Cartesian and apply the feasibility gate.

    Returns ``(all, feasible)`` in the deterministic end-state order.
    """
    ref = scenario.reference
    if ego_frenet is None:
        ego_frenet = ego_to_frenet(scenario, ego)
    ego_frenet = FrenetState(*ego_frenet)
    ends = sample_end_states(config, ego_frenet)
    for _, _, T in ends:
        if T <= 2.0 * config.dt:
            raise ValueError(f"degenerate horizon T={T} <= 2*dt")
    horizon = config.output_horizon if config.output_horizon is not None else max(config.horizons)
    lat, lon, fr = _frenet_batch(ego_frenet, ends, config.dt, horizon)

    s = fr[..., 0]
    out_of_path = np.any((s < 0.0) | (s > ref.length), axis=1)
    conv = fr.copy()
    conv[..., 0] = np.clip(s, 0.0, ref.length)
    x, y, v, a, theta, one = frenet_to_cartesian_arrays(ref, conv)
    out_of_path |= np.any(one <= 0.0, axis=1)
    times = ego.t + config.dt * np.arange(fr.shape[1])

    flags = _violations(x, y, v, a, theta, config.dt, config.limits)
    flags["speed"] = flags["speed"] | np.any(fr[..., 2] < -1e-9, axis=1)
    reasons = np.full(len(ends), None, dtype=object)
    for reason in reversed(REASONS):
        reasons[flags[reason]] = reason
    reasons[out_of_path] = "out_of_path"

    kin_ok = reasons == None  # noqa: E711 - elementwise on an object array
    clearance = np.full(x.shape, np.inf)
    if kin_ok.any() and scenario.obstacles:
        idx = np.flatnonzero(kin_ok)
        clearance[idx] = obstacle_clearance(scenario, times, x[idx], y[idx], theta[idx], cap=CLEARANCE_CAP)
        hit = np.zeros(len(ends), dtype=bool)
        hit[idx] = np.any(clearance[idx] <= 0.0, axis=1)
        reasons[hit] = "collision"

    candidates = []
    for i, end in enumerate(ends):
        traj = Trajectory(config.dt, np.column_stack([times, x[i], y[i], v[i], a[i], theta[i]]))
        candidates.append(
            FrenetCandidate(
                lat[i],
                lon[i],
                end[2],
                end,
                fr[i],
                config.dt,
                cartesian=traj,
                feasible=reasons[i] is None,
                infeasibility_reason=reasons[i],
                clearance=clearance[i],
            )
        )
    return candidates, [c for c in candidates if c.feasible]
