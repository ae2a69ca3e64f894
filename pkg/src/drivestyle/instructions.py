"""LLaVA-style instruction samples: BEV renderer, prompt assembly and dataset writer."""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .scenario import Scenario, TrajState, wrap_angle

BEV_RADIUS = 30.0
K_AGENTS = 10
RESPONSE_DT = 0.5
HORIZONS = (3.0, 5.0)
DOMAINS = ("BEV", "FPV")
ROAD_HALF_WIDTH = 6.5
PX_PER_M = 10.0
FRAME = "ego-centric at the t=0 ego pose, x forward, y left"

CLASS_COLORS = {"static": "#8c564b", "dynamic": "#1f77b4"}
EGO_COLOR = "#d62728"
GOAL_COLOR = "#2ca02c"


@lru_cache(maxsize=1)
def load_prompts():
    text = resources.files("drivestyle").joinpath("data/prompts.json").read_text(encoding="utf-8")
    return json.loads(text)


def to_ego_frame(x, y, origin: TrajState):
    """World positions expressed in the frame of ``origin`` (x forward, y left)."""
    dx = np.asarray(x, dtype=float) - origin.x
    dy = np.asarray(y, dtype=float) - origin.y
    c, s = math.cos(origin.theta), math.sin(origin.theta)
    return dx * c + dy * s, -dx * s + dy * c


# ---------------------------------------------------------------------------
# agents and rendering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AgentState:
    id: object
    x: float
    y: float
    theta: float
    v: float
    length: float
    width: float
    distance: float
    moving: bool


def nearest_agents(scenario: Scenario, ego: TrajState, k=K_AGENTS, radius=BEV_RADIUS):
    """Agents present at ``ego.t`` within ``radius``, nearest first, ties by id."""
    found = []
    for ob in scenario.obstacles:
        st = ob.states_at([ego.t])[0]
        if np.isnan(st[0]):
            continue
        dist = math.hypot(st[0] - ego.x, st[1] - ego.y)
        if dist > radius:
            continue
        found.append(
            (
                dist,
                ob.sort_key,
                AgentState(ob.id, float(st[0]), float(st[1]), float(st[2]), float(st[3]), ob.length, ob.width, dist, not ob.is_static),
            )
        )
    found.sort(key=lambda r: (r[0], r[1]))
    return [r[2] for r in found[:k]]


def _fmt(v):
    return f"{v:.2f}"


def render_bev(scenario: Scenario, ego: TrajState, radius=BEV_RADIUS) -> str:
    """Deterministic SVG of the ego-centred local map, heading up, clipped to ``radius``."""
    half = radius * PX_PER_M
    size = 2 * half

    def px(xe, ye):
        # ego frame (x forward, y left) -> image (right, down)
        return half - np.asarray(ye) * PX_PER_M, half - np.asarray(xe) * PX_PER_M

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0f}" height="{size:.0f}" viewBox="0 0 {size:.0f} {size:.0f}">',
        "<defs><clipPath id=\"view\">"
        f'<circle cx="{_fmt(half)}" cy="{_fmt(half)}" r="{_fmt(half)}"/></clipPath></defs>',
        '<rect width="100%" height="100%" fill="#ffffff"/>',
        '<g clip-path="url(#view)">',
    ]
    ref = scenario.reference
    near = np.hypot(ref.points[:, 0] - ego.x, ref.points[:, 1] - ego.y) <= radius + 10.0
    if near.any():
        s = ref.arclen[near]
        for d, style in ((ROAD_HALF_WIDTH, "#555555"), (-ROAD_HALF_WIDTH, "#555555"), (0.0, "#bbbbbb")):
            wx, wy = ref.position(s, np.full(len(s), d))
            xe, ye = to_ego_frame(wx, wy, ego)
            ix, iy = px(xe, ye)
            pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(ix, iy))
            dash = ' stroke-dasharray="8,6"' if d == 0.0 else ""
            out.append(f'<polyline class="road" points="{pts}" fill="none" stroke="{style}" stroke-width="2"{dash}/>')
    g = scenario.goal
    gx, gy = to_ego_frame(g.x, g.y, ego)
    if math.hypot(float(gx), float(gy)) <= radius + g.radius:
        cx, cy = px(gx, gy)
        out.append(
            f'<circle class="goal" cx="{_fmt(float(cx))}" cy="{_fmt(float(cy))}" r="{_fmt(g.radius * PX_PER_M)}" '
            f'fill="{GOAL_COLOR}" fill-opacity="0.25" stroke="{GOAL_COLOR}"/>'
        )
    for ag in sorted(nearest_agents(scenario, ego, k=len(scenario.obstacles), radius=radius), key=lambda a: (a.distance, str(a.id))):
        xe, ye = to_ego_frame(ag.x, ag.y, ego)
        cx, cy = px(xe, ye)
        rel = float(wrap_angle(ag.theta - ego.theta))
        cls = "dynamic" if ag.moving else "static"
        # rotate(-deg) because image y points down
        out.append(
            f'<rect class="agent {cls}" data-id="{ag.id}" x="{_fmt(-ag.width * PX_PER_M / 2)}" y="{_fmt(-ag.length * PX_PER_M / 2)}" '
            f'width="{_fmt(ag.width * PX_PER_M)}" height="{_fmt(ag.length * PX_PER_M)}" fill="{CLASS_COLORS[cls]}" '
            f'transform="translate({_fmt(float(cx))},{_fmt(float(cy))}) rotate({_fmt(-math.degrees(rel))})"/>'
        )
    out.append(
        f'<polygon class="ego" points="{_fmt(half)},{_fmt(half - 25)} {_fmt(half - 10)},{_fmt(half + 20)} '
        f'{_fmt(half + 10)},{_fmt(half + 20)}" fill="{EGO_COLOR}"/>'
    )
    out.append("</g></svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# samples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VQASample:
    id: str
    image: str
    conversations: tuple
    domain: str
    style: str
    horizon: float

    def __post_init__(self):
        conv = tuple(dict(c) for c in self.conversations)
        if len(conv) != 2 or conv[0].get("from") != "human" or conv[1].get("from") != "gpt":
            raise ValueError("a sample needs exactly one human turn followed by one gpt turn")
        parse_response(conv[1]["value"])
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        object.__setattr__(self, "conversations", conv)

    def to_record(self):
        return {"id": self.id, "image": self.image, "conversations": [dict(c) for c in self.conversations]}

    @classmethod
    def from_record(cls, rec):
        scenario_id, style, _step, domain, horizon = rec["id"].split("__")
        return cls(rec["id"], rec["image"], tuple(rec["conversations"]), domain, style, float(horizon.rstrip("s")))


def sample_id(scenario_id, style, step, domain, horizon):
    return f"{scenario_id}__{style}__{step:04d}__{domain}__{horizon:g}s"


def response_states(instance, horizon):
    """Ground-truth states every ``RESPONSE_DT`` up to ``horizon``, in the ego frame."""
    if horizon not in HORIZONS:
        raise ValueError(f"horizon must be one of {HORIZONS}")
    traj = instance.trajectory
    stride = int(round(RESPONSE_DT / traj.dt))
    n = int(round(horizon / RESPONSE_DT)) + 1
    last = (n - 1) * stride
    if last >= len(traj):
        raise ValueError(f"ground truth covers {traj.duration:g} s, shorter than the {horizon:g} s horizon")
    idx = np.arange(0, last + 1, stride)
    d = traj.data[idx]
    origin = instance.ego
    xe, ye = to_ego_frame(d[:, 1], d[:, 2], origin)
    th = wrap_angle(d[:, 5] - origin.theta)
    return np.column_stack([d[:, 0] - d[0, 0], xe, ye, d[:, 3], d[:, 4], th])


def _num(v):
    r = round(float(v), 4)
    return 0.0 if r == 0 else r  # no "-0.0"


def format_response(states, horizon):
    body = {
        "horizon_s": float(horizon),
        "dt_s": RESPONSE_DT,
        "states": [dict(zip(("t", "x", "y", "v", "a", "theta"), (_num(v) for v in row))) for row in states],
    }
    return json.dumps(body, separators=(", ", ": "))


def parse_response(text):
    """Parse a trajectory answer; returns ``(horizon, dt, states (N, 6))``; missing channels become NaN."""
    body = json.loads(text)
    states = body["states"]
    if not isinstance(states, list) or len(states) < 2:
        raise ValueError("response needs at least 2 states")
    rows = []
    for st in states:
        rows.append([float(st[k]) if k in st and st[k] is not None else np.nan for k in ("t", "x", "y", "v", "a", "theta")])
    arr = np.array(rows)
    if np.any(np.isnan(arr[:, :3])):
        raise ValueError("every state needs t, x and y")
    return float(body.get("horizon_s", arr[-1, 0] - arr[0, 0])), float(body.get("dt_s", arr[1, 0] - arr[0, 0])), arr


def _history_lines(instance):
    lines = []
    for st in instance.history:
        xe, ye = to_ego_frame(st.x, st.y, instance.ego)
        th = float(wrap_angle(st.theta - instance.ego.theta))
        lines.append(
            f"t={st.t:.2f}: x={_fmt(float(xe))}, y={_fmt(float(ye))}, v={_fmt(st.v)}, a={_fmt(st.a)}, theta={_fmt(th)}"
        )
    return lines


def _goal_line(scenario, ego, with_radius):
    gx, gy = to_ego_frame(scenario.goal.x, scenario.goal.y, ego)
    line = f"x={_fmt(float(gx))}, y={_fmt(float(gy))}"
    if with_radius:
        line += f", radius={_fmt(scenario.goal.radius)}"
    return line


def _style_lines(style, horizon, prompts):
    cmd = prompts["style_command"].format(mode=style, horizon=horizon)
    hint = prompts["style_hints"].get(style)
    return [cmd + (" " + hint if hint else ""), prompts["response_format"].format(dt=RESPONSE_DT)]


def _check_history(instance):
    if len(instance.history) != 6:
        raise ValueError("ego history must hold exactly 6 states")
    ts = [s.t for s in instance.history]
    if any(abs((b - a) - 0.1) > 1e-9 for a, b in zip(ts, ts[1:])):
        raise ValueError("ego history must be spaced 0.1 s")


def build_bev_sample(instance, scenario: Scenario, horizon=3.0, image_ref=None, style=None) -> VQASample:
    """BEV sample: history, nearest agents, goal region and style command, in that order."""
    style = style or instance.style
    _check_history(instance)
    gt = response_states(instance, horizon)
    prompts = load_prompts()
    ego = instance.ego
    lines = [prompts["intro_bev"], prompts["history_header"], *_history_lines(instance), prompts["agents_header"]]
    agents = nearest_agents(scenario, ego)
    if not agents:
        lines.append(prompts["agents_empty"])
    for ag in agents:
        xe, ye = to_ego_frame(ag.x, ag.y, ego)
        th = float(wrap_angle(ag.theta - ego.theta))
        lines.append(
            f"id={ag.id}: x={_fmt(float(xe))}, y={_fmt(float(ye))}, theta={_fmt(th)}, v={_fmt(ag.v)}, "
            f"length={_fmt(ag.length)}, width={_fmt(ag.width)}"
        )
    lines += [prompts["goal_region_header"], _goal_line(scenario, ego, True), prompts["style_header"], *_style_lines(style, horizon, prompts)]
    sid = sample_id(instance.scenario_id, style, instance.step, "BEV", horizon)
    image = image_ref or f"bev/{instance.scenario_id}/{style}/{instance.step:04d}.svg"
    conv = ({"from": "human", "value": "\n".join(lines)}, {"from": "gpt", "value": format_response(gt, horizon)})
    return VQASample(sid, image, conv, "BEV", style, float(horizon))


def build_fpv_sample(instance, scenario: Scenario, image_ref, horizon=3.0, style=None) -> VQASample:
    """Vision-only variant: history, goal point and style command; no agent list."""
    if not image_ref:
        raise ValueError("FPV samples need an image reference")
    style = style or instance.style
    _check_history(instance)
    gt = response_states(instance, horizon)
    prompts = load_prompts()
    lines = [
        prompts["intro_fpv"],
        prompts["history_header"],
        *_history_lines(instance),
        prompts["goal_point_header"],
        _goal_line(scenario, instance.ego, False),
        prompts["style_header"],
        *_style_lines(style, horizon, prompts),
    ]
    sid = sample_id(instance.scenario_id, style, instance.step, "FPV", horizon)
    conv = ({"from": "human", "value": "\n".join(lines)}, {"from": "gpt", "value": format_response(gt, horizon)})
    return VQASample(sid, str(image_ref), conv, "FPV", style, float(horizon))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def atomic_write(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dataset_manifest(samples, extra=None):
    per_style, per_domain = {}, {}
    for s in samples:
        per_style[s.style] = per_style.get(s.style, 0) + 1
        per_domain[s.domain] = per_domain.get(s.domain, 0) + 1
    man = {
        "count": len(samples),
        "per_style": dict(sorted(per_style.items())),
        "per_domain": dict(sorted(per_domain.items())),
        "response_frame": FRAME,
        "response_dt_s": RESPONSE_DT,
        "prompts_version": load_prompts()["version"],
    }
    if extra:
        man.update(extra)
    return man


def serialize_dataset(samples, path, jsonl=False, manifest_path=None, extra=None):
    """Write records as one JSON array (or JSON lines) plus a manifest next to it."""
    samples = list(samples)
    records = [s.to_record() for s in samples]
    if jsonl:
        text = "".join(json.dumps(r, sort_keys=False) + "\n" for r in records)
    else:
        text = json.dumps(records, indent=1) + "\n"
    atomic_write(path, text)
    manifest = dataset_manifest(samples, extra)
    manifest_path = manifest_path or os.fspath(path) + ".manifest.json"
    atomic_write(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_dataset(path):
    """Read records written by :func:`serialize_dataset` (either layout)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("["):
        return json.loads(text)
    return [json.loads(line) for line in text.splitlines() if line.strip()]
