import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drivestyle.losses import pikc_loss
from drivestyle.metrics import (
    KCE_ATOL,
    SampleMetrics,
    build_report,
    composite_score,
    displacement_metrics,
    implied_kinematic_score,
    kce,
    sample_metrics,
    score_terms,
)


def track(n=7, dt=0.5, v=4.0):
    t = dt * np.arange(n)
    return np.column_stack([v * t, 0 * t, np.full(n, v), 0 * t, 0 * t])


def test_displacement_examples():
    g = track()
    assert displacement_metrics(g, g) == (0.0, 0.0)
    p = g.copy()
    p[:, 0] += 1.0
    assert displacement_metrics(p, g) == pytest.approx((1.0, 1.0))
    p = g.copy()
    p[-1, 1] += 2.0
    assert displacement_metrics(p, g) == pytest.approx((2 / 7, 2.0))
    with pytest.raises(ValueError):
        displacement_metrics(g[:5], g)


def test_kce_examples():
    assert kce(track(), 0.5) == 0.0
    two = np.array([[0, 0, 2, 0, 0], [1.3, 0.4, 2, 0, 0]])
    assert kce(two, 0.5) == pytest.approx(0.5)
    assert kce(track()[:, :2], 0.5) is None


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1))
def test_kce_zero_iff_pikc_zero(seed, noise):
    p = track()
    p[3:, :2] += noise * np.random.default_rng(seed).normal(size=(4, 2))
    k = kce(p, 0.5)
    pv = pikc_loss(p, 0.5)[0]
    assert (k == 0.0) == (pv < KCE_ATOL**2)


def test_threshold_strictness_and_wrapping():
    g = track()
    p = g.copy()
    p[:, 1] += 0.99
    assert sample_metrics(p, g, 0.5).success
    p = g.copy()
    p[-1, 1] += 2.0
    assert not sample_metrics(p, g, 0.5).miss
    p = g.copy()
    p[:, 4] += 2 * math.pi - 0.1
    assert sample_metrics(p, g, 0.5).mae_theta == pytest.approx(0.1)


def test_score_identity_and_reference_row():
    assert score_terms(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0).s_final == 1.0
    known = score_terms(0.1638, 0.6621, 1.72, 4.37).s_final
    assert known == pytest.approx(0.212, abs=5e-4)
    assert 0.0 <= implied_kinematic_score(0.32, 0.1638, 0.6621, 1.72, 4.37) <= 1.0
    assert score_terms(1, 0, 0, 0, 0, 3.0, 0).s_vel == 0.0


def test_missing_kce_is_partial():
    b = score_terms(0.5, 0.5, 1.0, 2.0)
    assert b.partial and b.s_kin is None
    assert b.s_final == pytest.approx(0.35 * 0.5 + 0.30 * 0.5 + 0.20 * (0.4 * math.exp(-1 / 1.5) + 0.6 * math.exp(-2 / 3)))


pos = st.floats(0, 20)


@settings(max_examples=300, deadline=None)
@given(psr=st.floats(0, 1), mr=st.floats(0, 1), ade=pos, fde=pos, k=pos, mv=pos, mt=pos)
def test_sub_scores_bounded(psr, mr, ade, fde, k, mv, mt):
    b = score_terms(psr, mr, ade, fde, k, mv, mt)
    for v in (b.s_succ, b.s_reach, b.s_acc, b.s_kin, b.s_vel, b.s_head, b.s_consist, b.s_final):
        assert 0.0 <= v <= 1.0


def test_modes_agree_on_identical_samples():
    m = SampleMetrics(0.7, 1.5, 0.05, 0.4, 0.02, True, False)
    a = composite_score([m] * 5, "per_sample_mean")
    b = composite_score([m] * 5, "aggregate_then_score")
    assert a.s_final == pytest.approx(b.s_final, abs=1e-15)
    with pytest.raises(ValueError):
        composite_score([m], "median")


def test_report_generation_rate_and_json(tmp_path):
    g = track()
    pairs = [(g, g, "Sporty", True)] * 9 + [(None, g, "Sporty", False)]
    rep = build_report(pairs, dt=0.5)
    assert rep.generation_rate == pytest.approx(0.9)
    assert rep.n_generated == 9 and rep.s_final == 1.0
    d = json.loads(rep.to_json())
    assert set(d) >= {"n_total", "n_generated", "psr", "mr", "ade", "fde", "kce", "mae_v", "mae_theta", "s_final", "per_style", "aggregation_mode"}
    rows = rep.to_csv("m").strip().splitlines()
    assert rows[0].startswith("label,style") and len(rows) == 3


def test_report_zero_generated():
    g = track()
    rep = build_report([(None, g, "Comfort", False)] * 3, dt=0.5)
    assert rep.s_final == 0.0 and rep.ade is None and rep.psr is None and rep.partial


def test_report_two_channel_predictions_are_partial():
    g = track()
    rep = build_report([(g[:, :2], g, "x", True)], dt=0.5)
    assert rep.kce is None and rep.partial and rep.s_kin is None


def _perturb(base, rng):
    keys = ("psr", "mr", "ade", "fde", "kce", "mae_v", "mae_theta")
    k = keys[rng.integers(len(keys))]
    better = dict(base)
    if k == "psr":
        better[k] = min(1.0, base[k] + rng.uniform(0, 0.5))
    else:
        better[k] = max(0.0, base[k] - rng.uniform(0, base[k] + 1e-9))
    return better


def test_monotonicity_random_trials():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        base = {"psr": rng.uniform(), "mr": rng.uniform(), "ade": rng.uniform(0, 5), "fde": rng.uniform(0, 10),
                "kce": rng.uniform(0, 1), "mae_v": rng.uniform(0, 4), "mae_theta": rng.uniform(0, 0.4)}
        better = _perturb(base, rng)
        f = lambda d: score_terms(d["psr"], d["mr"], d["ade"], d["fde"], d["kce"], d["mae_v"], d["mae_theta"]).s_final  # noqa: E731
        assert f(better) >= f(base)
