import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drivestyle.sampler import (
    FeasibilityLimits,
    FrenetState,
    SamplerConfig,
    build_candidate,
    check_feasibility,
    generate_candidates,
    quartic_coefficients,
    quintic_coefficients,
    sample_end_states,
)
from drivestyle.scenario import Trajectory

from conftest import make_scenario


def _traj(dt, x, y, v, a, theta):
    n = len(x)
    return Trajectory(dt, np.column_stack([dt * np.arange(n), x, y, v, a, theta]))


def test_end_state_cardinality_and_order():
    cfg = SamplerConfig((-1.0, 0.0, 1.0), (5.0, 6.0, 7.0, 8.0), (3.0,))
    ends = sample_end_states(cfg)
    assert len(ends) == 12
    assert ends[0] == (-1.0, 5.0, 3.0)


def test_enumeration_two_horizons():
    cfg = SamplerConfig(tuple(np.linspace(-3, 3, 11)), tuple(np.linspace(0, 10, 11)), (2.0, 3.0))
    assert len(sample_end_states(cfg)) == 242


def test_config_invariants():
    with pytest.raises(ValueError):
        SamplerConfig((1.0, 0.0), (5.0,), (3.0,))
    with pytest.raises(ValueError):
        SamplerConfig((0.0,), (-1.0,), (3.0,))
    with pytest.raises(ValueError):
        SamplerConfig((0.0,), (5.0,), (3.05,), dt=0.1)
    with pytest.raises(ValueError):
        FeasibilityLimits(a_max=0.0)


def test_default_grid():
    cfg = SamplerConfig.default(10.0)
    assert len(cfg.lateral_offsets) == 11 and cfg.lateral_offsets[0] == -3.0 and cfg.lateral_offsets[-1] == 3.0
    assert cfg.target_speeds == pytest.approx((0, 2, 4, 6, 8, 10, 12))
    assert cfg.horizons == (2.0, 3.0, 4.0) and cfg.dt == 0.1


def test_zero_lateral_polynomial():
    c = build_candidate(FrenetState(0.0, 0.0, 5.0), (0.0, 5.0, 3.0), 0.1)
    assert np.all(c.frenet[:, 1] == 0.0)


def test_constant_speed_longitudinal():
    c = build_candidate(FrenetState(2.0, 0.0, 5.0), (0.0, 5.0, 3.0), 0.1)
    t = 0.1 * np.arange(len(c.frenet))
    assert np.allclose(c.frenet[:, 0], 2.0 + 5.0 * t, atol=1e-12)


def test_quintic_midpoint_symmetry():
    co = quintic_coefficients(2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0)
    assert np.polyval(co[::-1], 2.0) == pytest.approx(1.0, abs=1e-9)


def test_quartic_end_conditions():
    co = quartic_coefficients(0.0, 3.0, 0.5, 8.0, 0.0, 4.0)
    p = np.polynomial.Polynomial(co)
    assert p.deriv(1)(4.0) == pytest.approx(8.0, abs=1e-9)
    assert p.deriv(2)(4.0) == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(
    d0=st.floats(-3, 3), dd0=st.floats(-2, 2), ddd0=st.floats(-2, 2),
    sd0=st.floats(0, 15), sdd0=st.floats(-3, 3),
    d1=st.floats(-3, 3), v1=st.floats(0, 15), T=st.sampled_from([2.0, 3.0, 4.0]),
)
def test_boundary_conditions_match_ego(d0, dd0, ddd0, sd0, sdd0, d1, v1, T):
    ego = FrenetState(1.0, d0, sd0, dd0, sdd0, ddd0)
    c = build_candidate(ego, (d1, v1, T), 0.1)
    s, d, sd, dd, sdd, ddd = c.frenet[0]
    assert abs(d - d0) < 1e-9 and abs(dd - dd0) < 1e-9 and abs(ddd - ddd0) < 1e-9
    assert abs(s - 1.0) < 1e-9 and abs(sd - sd0) < 1e-9 and abs(sdd - sdd0) < 1e-9
    end = int(round(T / 0.1))
    assert abs(c.frenet[end, 1] - d1) < 1e-7 and abs(c.frenet[end, 2] - v1) < 1e-7


def test_feasibility_straight_ok():
    t = np.arange(31) * 0.1
    tr = _traj(0.1, 5 * t, 0 * t, np.full_like(t, 5.0), 0 * t, 0 * t)
    assert check_feasibility(tr, FeasibilityLimits()) == (True, None)


def test_feasibility_accel():
    t = np.arange(31) * 0.1
    a = np.zeros_like(t)
    a[10] = 10.0
    tr = _traj(0.1, 5 * t, 0 * t, np.full_like(t, 5.0), a, 0 * t)
    assert check_feasibility(tr, FeasibilityLimits(a_max=8.0)) == (False, "accel")


def test_feasibility_yaw_rate_quarter_turn_per_second():
    t = np.arange(11) * 0.1
    th = (math.pi / 2) * t
    r = 5.0 / (math.pi / 2)
    tr = _traj(0.1, r * np.sin(th), r * (1 - np.cos(th)), np.full_like(t, 5.0), 0 * t, th)
    res = check_feasibility(tr, FeasibilityLimits(yaw_rate_max=0.5, kappa_max=10.0))
    assert res == (False, "yaw_rate")


def _grid_cfg(**kw):
    return SamplerConfig((-1.0, 0.0, 1.0), (4.0, 5.0, 6.0, 7.0), (3.0,), **kw)


def test_tight_limits_leave_nothing():
    sc = make_scenario()
    # no speed target equals the ego speed, so every candidate must accelerate
    cfg = SamplerConfig((-1.0, 0.0, 1.0), (6.0, 7.0, 8.0, 9.0), (3.0,), limits=FeasibilityLimits(a_max=0.01))
    all_c, feas = generate_candidates(sc, sc.ego_init, cfg)
    assert len(all_c) == 12 and feas == []
    assert all(c.infeasibility_reason for c in all_c)


def test_permissive_all_feasible_and_deterministic():
    sc = make_scenario()
    cfg = _grid_cfg()
    all_c, feas = generate_candidates(sc, sc.ego_init, cfg)
    assert len(feas) == 12
    again, _ = generate_candidates(sc, sc.ego_init, cfg)
    assert all(np.array_equal(a.cartesian.data, b.cartesian.data) for a, b in zip(all_c, again))


@settings(max_examples=25, deadline=None)
@given(factor=st.floats(0.05, 1.0))
def test_shrinking_limits_never_grows_feasible_set(factor):
    sc = make_scenario()
    base = FeasibilityLimits(a_max=3.0, kappa_max=0.1, yaw_rate_max=0.5, v_max=20.0)
    small = FeasibilityLimits(*(getattr(base, k) * factor for k in ("a_max", "kappa_max", "yaw_rate_max", "v_max")))
    cfg = SamplerConfig((-3.0, -1.0, 0.0, 1.0, 3.0), (0.0, 3.0, 6.0, 9.0), (2.0, 3.0))
    _, wide = generate_candidates(sc, sc.ego_init, SamplerConfig(**{**cfg.__dict__, "limits": base}))
    _, narrow = generate_candidates(sc, sc.ego_init, SamplerConfig(**{**cfg.__dict__, "limits": small}))
    assert {c.end for c in narrow} <= {c.end for c in wide}


def test_cardinality_matches_grid():
    sc = make_scenario()
    cfg = SamplerConfig.default(5.0)
    all_c, _ = generate_candidates(sc, sc.ego_init, cfg)
    assert len(all_c) == 11 * 7 * 3
