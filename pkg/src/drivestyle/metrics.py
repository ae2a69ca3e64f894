"""Open-loop trajectory metrics and the composite driving score."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .scenario import wrap_angle

SUCCESS_ADE = 1.0
MISS_FDE = 2.0
MODES = ("per_sample_mean", "aggregate_then_score")

SCORE_WEIGHTS = {"succ": 0.35, "reach": 0.30, "acc": 0.20, "kin": 0.15}
ACC_MIX = (0.4, 1.5, 0.6, 3.0)  # weight, ADE scale, weight, FDE scale
KIN_MIX = {"vel": 0.3, "head": 0.3, "consist": 0.4}
VEL_SCALE = 3.0
HEAD_SCALE = 0.2
KCE_SCALE = 0.5
KCE_ATOL = 1e-9  # residuals below this are float round-off, not kinematic error


def _track(seq):
    """``(T, 5)`` float array over x, y, v, a, theta; absent channels are NaN."""
    if hasattr(seq, "states") and not isinstance(seq, dict):
        arr = np.asarray(seq.states, dtype=float)
    else:
        arr = np.asarray(seq, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (2, 5):
        raise ValueError(f"expected (T, 2) or (T, 5) states, got shape {arr.shape}")
    if arr.shape[1] == 2:
        arr = np.column_stack([arr, np.full((len(arr), 3), np.nan)])
    return arr


def _dt(seq, dt):
    if dt is not None:
        return float(dt)
    if hasattr(seq, "dt"):
        return float(seq.dt)
    raise ValueError("dt required for plain arrays")


def displacement_metrics(pred, gt):
    """Mean and final Euclidean position error; sequences must have equal length."""
    p, g = _track(pred), _track(gt)
    if len(p) != len(g):
        raise ValueError(f"length mismatch: pred has {len(p)} states, gt has {len(g)}")
    err = np.hypot(p[:, 0] - g[:, 0], p[:, 1] - g[:, 1])
    return float(err.mean()), float(err[-1])


def kce(pred, dt=None):
    """Mean Euclidean gap to the constant-acceleration rollout; ``None`` without v/a/theta."""
    p = _track(pred)
    if len(p) < 2:
        raise ValueError("KCE needs at least 2 states")
    if not np.all(np.isfinite(p[:, 2:])):
        return None
    res = kernels.rollout_residuals(p, _dt(pred, dt))
    gap = np.hypot(res[:, 0], res[:, 1])
    gap[gap < KCE_ATOL] = 0.0
    return float(np.mean(gap))


@dataclass(frozen=True)
class SampleMetrics:
    ade: float
    fde: float
    kce: float | None
    mae_v: float | None
    mae_theta: float | None
    success: bool
    miss: bool


def sample_metrics(pred, gt, dt=None, success_ade=SUCCESS_ADE, miss_fde=MISS_FDE) -> SampleMetrics:
    p, g = _track(pred), _track(gt)
    ade, fde = displacement_metrics(p, g)
    k = kce(p, _dt(pred, dt) if (dt is not None or hasattr(pred, "dt")) else _dt(gt, dt))
    mae_v = float(np.mean(np.abs(p[:, 2] - g[:, 2]))) if np.all(np.isfinite(p[:, 2])) else None
    if np.all(np.isfinite(p[:, 4])):
        mae_theta = float(np.mean(np.abs(wrap_angle(p[:, 4] - g[:, 4]))))
    else:
        mae_theta = None
    return SampleMetrics(ade, fde, k, mae_v, mae_theta, bool(ade < success_ade), bool(fde > miss_fde))


@dataclass(frozen=True)
class ScoreBreakdown:
    s_final: float
    s_succ: float
    s_reach: float
    s_acc: float
    s_kin: float | None
    s_vel: float | None
    s_head: float | None
    s_consist: float | None
    partial: bool


def score_terms(psr, mr, ade, fde, kce_v=None, mae_v=None, mae_theta=None) -> ScoreBreakdown:
    """Sub-scores and S_final from plugged-in values.

    Without KCE (or the velocity/heading errors) the kinematic part is not
    computable: it contributes nothing and the result is marked partial.
    """
    s_succ = float(psr)
    s_reach = 1.0 - float(mr)
    w1, a_scale, w2, f_scale = ACC_MIX
    s_acc = math.fsum([w1 * math.exp(-ade / a_scale), w2 * math.exp(-fde / f_scale)])
    s_vel = None if mae_v is None else max(0.0, 1.0 - mae_v / VEL_SCALE)
    s_head = None if mae_theta is None else max(0.0, 1.0 - mae_theta / HEAD_SCALE)
    s_consist = None if kce_v is None else max(0.0, 1.0 - kce_v / KCE_SCALE)
    parts = (s_vel, s_head, s_consist)
    if any(p is None for p in parts):
        s_kin = None
    else:
        s_kin = math.fsum([KIN_MIX["vel"] * s_vel, KIN_MIX["head"] * s_head, KIN_MIX["consist"] * s_consist])
    # fsum keeps the identity case (perfect prediction) at exactly 1.0
    w = SCORE_WEIGHTS
    terms = [w["succ"] * s_succ, w["reach"] * s_reach, w["acc"] * s_acc]
    if s_kin is not None:
        terms.append(w["kin"] * s_kin)
    total = math.fsum(terms)
    return ScoreBreakdown(total, s_succ, s_reach, s_acc, s_kin, s_vel, s_head, s_consist, s_kin is None)


def implied_kinematic_score(s_final, psr, mr, ade, fde):
    """Back out S_kin from a reported score and its non-kinematic inputs."""
    known = score_terms(psr, mr, ade, fde).s_final
    return (s_final - known) / SCORE_WEIGHTS["kin"]


def _mean_or_none(values):
    vals = [v for v in values if v is not None]
    if len(vals) != len(values) or not vals:
        return None
    return float(np.mean(vals))


def composite_score(samples, mode="per_sample_mean") -> ScoreBreakdown:
    """S_final over a list of :class:`SampleMetrics`.

    ``per_sample_mean`` scores each sample (its own success/miss as 0/1) and
    averages; ``aggregate_then_score`` plugs dataset means into the formula.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    samples = list(samples)
    if not samples:
        return ScoreBreakdown(0.0, 0.0, 0.0, 0.0, None, None, None, None, True)
    if mode == "aggregate_then_score":
        return score_terms(
            np.mean([s.success for s in samples]),
            np.mean([s.miss for s in samples]),
            float(np.mean([s.ade for s in samples])),
            float(np.mean([s.fde for s in samples])),
            _mean_or_none([s.kce for s in samples]),
            _mean_or_none([s.mae_v for s in samples]),
            _mean_or_none([s.mae_theta for s in samples]),
        )
    per = [
        score_terms(float(s.success), float(s.miss), s.ade, s.fde, s.kce, s.mae_v, s.mae_theta) for s in samples
    ]
    names = ("s_final", "s_succ", "s_reach", "s_acc", "s_kin", "s_vel", "s_head", "s_consist")
    vals = {n: _mean_or_none([getattr(b, n) for b in per]) for n in names}
    return ScoreBreakdown(**vals, partial=any(b.partial for b in per))


@dataclass
class MetricsReport:
    n_total: int
    n_generated: int
    generation_rate: float
    psr: float | None
    mr: float | None
    ade: float | None
    fde: float | None
    kce: float | None
    mae_v: float | None
    mae_theta: float | None
    s_final: float
    s_kin: float | None
    partial: bool
    aggregation_mode: str
    thresholds: dict
    per_style: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self, extra=None):
        d = self.to_dict()
        if extra:
            d = {**extra, **d}
        return json.dumps(d, indent=2, sort_keys=True)

    def to_csv(self, label="model"):
        cols = ["label", "style", "n_total", "n_generated", "generation_rate", "psr", "mr", "ade", "fde", "kce", "mae_v", "mae_theta", "s_final"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)

        def row(style, rep):
            out = [label, style]
            for c in cols[2:]:
                v = rep[c] if isinstance(rep, dict) else getattr(rep, c)
                out.append("" if v is None else (f"{v:.6f}" if isinstance(v, float) else v))
            return out

        w.writerow(row("all", self))
        for style in sorted(self.per_style):
            w.writerow(row(style, self.per_style[style]))
        return buf.getvalue()


def _summarize(metrics, n_total, mode, thresholds):
    n_gen = len(metrics)
    rate = n_gen / n_total if n_total else 0.0
    if not metrics:
        return MetricsReport(n_total, 0, rate, None, None, None, None, None, None, None, 0.0, None, True, mode, thresholds)
    score = composite_score(metrics, mode)
    return MetricsReport(
        n_total,
        n_gen,
        rate,
        float(np.mean([m.success for m in metrics])),
        float(np.mean([m.miss for m in metrics])),
        float(np.mean([m.ade for m in metrics])),
        float(np.mean([m.fde for m in metrics])),
        _mean_or_none([m.kce for m in metrics]),
        _mean_or_none([m.mae_v for m in metrics]),
        _mean_or_none([m.mae_theta for m in metrics]),
        score.s_final,
        score.s_kin,
        score.partial,
        mode,
        thresholds,
    )


def build_report(pairs, mode="per_sample_mean", dt=None, success_ade=SUCCESS_ADE, miss_fde=MISS_FDE) -> MetricsReport:
    """Aggregate ``(pred, gt, style, generated)`` tuples; ungenerated pairs only count toward the rate."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    thresholds = {"success_ade": success_ade, "miss_fde": miss_fde}
    pairs = list(pairs)
    by_style = {}
    all_metrics = []
    for pred, gt, style, generated in pairs:
        entry = by_style.setdefault(style, [0, []])
        entry[0] += 1
        if not generated:
            continue
        m = sample_metrics(pred, gt, dt, success_ade, miss_fde)
        entry[1].append(m)
        all_metrics.append(m)
    report = _summarize(all_metrics, len(pairs), mode, thresholds)
    for style in sorted(by_style, key=str):
        n, ms = by_style[style]
        sub = _summarize(ms, n, mode, thresholds).to_dict()
        sub.pop("per_style")
        report.per_style[str(style)] = sub
    return report
