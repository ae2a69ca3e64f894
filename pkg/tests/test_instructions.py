import json
import re

import numpy as np
import pytest

from drivestyle.costs import STYLE_NAMES
from drivestyle.instructions import (
    VQASample,
    build_bev_sample,
    build_fpv_sample,
    format_response,
    load_dataset,
    load_prompts,
    nearest_agents,
    parse_response,
    render_bev,
    response_states,
    serialize_dataset,
    to_ego_frame,
)
from drivestyle.metrics import displacement_metrics, kce
from drivestyle.scenario import TrajState

from conftest import make_scenario, static_obstacle

EGO = TrajState(0.0, 0.0, 0.0, 5.0, 0.0, 0.0)


def test_ego_frame_axes():
    origin = TrajState(0.0, 10.0, 5.0, 0.0, 0.0, np.pi / 2)
    xe, ye = to_ego_frame(10.0, 8.0, origin)  # 3 m along the heading
    assert (float(xe), float(ye)) == pytest.approx((3.0, 0.0))
    xe, ye = to_ego_frame(7.0, 5.0, origin)  # 3 m to the left
    assert (float(xe), float(ye)) == pytest.approx((0.0, 3.0))


def test_nearest_agents_counts_and_ties():
    three = make_scenario(obstacles=[static_obstacle(i, 5.0 * (i + 1), 3.0) for i in range(3)])
    assert len(nearest_agents(three, EGO)) == 3
    many = make_scenario(obstacles=[static_obstacle(i, 1.5 * (i + 1), 4.0) for i in range(15)])
    got = nearest_agents(many, EGO)
    assert [a.id for a in got] == list(range(10))
    tie = make_scenario(obstacles=[static_obstacle(7, 10.0, 4.0), static_obstacle(2, 10.0, -4.0)])
    assert [a.id for a in nearest_agents(tie, EGO)] == [2, 7]


def test_render_empty_and_clipping():
    empty = render_bev(make_scenario(goal=(95.0, 0.0, 2.0)), EGO)
    assert 'class="ego"' in empty and 'class="road"' in empty
    assert "agent" not in empty and 'class="goal"' not in empty
    sc = make_scenario(obstacles=[static_obstacle(1, 31.0, 0.0), static_obstacle(2, 12.0, 3.0)])
    svg = render_bev(sc, EGO)
    assert 'data-id="2"' in svg and 'data-id="1"' not in svg
    assert render_bev(sc, EGO) == svg


@pytest.mark.parametrize("horizon, n", [(3.0, 7), (5.0, 11)])
def test_response_state_counts(short_instances, horizon, n):
    sc, inst = short_instances
    sample = build_bev_sample(inst[0], sc, horizon)
    h, dt, arr = parse_response(sample.conversations[1]["value"])
    assert (h, dt) == (horizon, 0.5) and arr.shape == (n, 6)
    assert np.allclose(np.diff(arr[:, 0]), 0.5)
    body = json.loads(sample.conversations[1]["value"])
    assert all(set(s) == {"t", "x", "y", "v", "a", "theta"} for s in body["states"])
    assert body["states"][0]["x"] == 0.0 and body["states"][0]["y"] == 0.0


def test_bad_horizon_rejected(short_instances):
    sc, inst = short_instances
    with pytest.raises(ValueError):
        build_bev_sample(inst[0], sc, 4.0)


def test_bev_field_order(short_instances):
    sc, inst = short_instances
    human = build_bev_sample(inst[2], sc).conversations[0]["value"]
    p = load_prompts()
    assert human.startswith("<image>\n")
    heads = [p["history_header"], p["agents_header"], p["goal_region_header"], p["style_header"]]
    pos = [human.index(h) for h in heads]
    assert pos == sorted(pos)
    assert len(re.findall(r"^t=-?\d", human, flags=re.M)) == 6
    assert "Comfort driving style for the next 3 s" in human


def test_fpv_has_no_agents_and_same_answer(short_instances):
    sc, inst = short_instances
    for i in inst:
        fpv = build_fpv_sample(i, sc, "cam/0001.png")
        bev = build_bev_sample(i, sc)
        assert "Traffic Agents" not in fpv.conversations[0]["value"]
        assert "id=" not in fpv.conversations[0]["value"]
        assert fpv.conversations[1] == bev.conversations[1]
    with pytest.raises(ValueError):
        build_fpv_sample(inst[0], sc, "")


def test_response_self_consistency(short_instances):
    sc, inst = short_instances
    for i in inst:
        _, dt, arr = parse_response(build_bev_sample(i, sc).conversations[1]["value"])
        ade, fde = displacement_metrics(arr[:, 1:], arr[:, 1:])
        assert ade == fde == 0.0
        src = i.trajectory.data[::5][:7]
        src_kce = kce(src[:, 1:], dt)
        assert kce(arr[:, 1:], dt) == pytest.approx(src_kce, abs=2e-4)


def test_format_has_no_negative_zero():
    text = format_response(np.array([[0.0, -0.0, -1e-7, 1.0, 0.0, 0.0]] * 2), 3.0)
    assert "-0.0" not in text


def test_serialize_round_trip(tmp_path, short_instances):
    sc, inst = short_instances
    samples = []
    for k, style in enumerate(STYLE_NAMES):
        for i in inst[:2]:
            samples.append(build_bev_sample(i, sc, style=style))
    man = serialize_dataset(samples, tmp_path / "d.json")
    assert man["per_style"] == {s: 2 for s in STYLE_NAMES}
    back = [VQASample.from_record(r) for r in load_dataset(tmp_path / "d.json")]
    assert back == samples
    serialize_dataset(samples, tmp_path / "d.jsonl", jsonl=True)
    assert load_dataset(tmp_path / "d.jsonl") == load_dataset(tmp_path / "d.json")


def test_empty_dataset(tmp_path):
    man = serialize_dataset([], tmp_path / "e.json")
    assert json.loads((tmp_path / "e.json").read_text()) == []
    assert man["count"] == 0 and man["per_style"] == {}
    assert json.loads((tmp_path / "e.json.manifest.json").read_text())["count"] == 0


def test_record_validation():
    with pytest.raises(ValueError):
        VQASample("a__b__0000__BEV__3s", "x.svg", ({"from": "gpt", "value": "{}"},), "BEV", "b", 3.0)


def test_build_is_byte_stable(short_instances):
    sc, inst = short_instances
    a = build_bev_sample(inst[1], sc).to_record()
    b = build_bev_sample(inst[1], sc).to_record()
    assert json.dumps(a) == json.dumps(b)
