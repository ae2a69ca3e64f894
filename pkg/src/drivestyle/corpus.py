"""Per-style summaries of a filtered corpus and the ordinal checks drawn from them."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .costs import STYLE_NAMES
from .style_filter import FEATURE_NAMES, FeatureVector, feature_array


@dataclass(frozen=True)
class StyleSummary:
    style: str
    mean_features: FeatureVector
    mean_path_length: float
    retained_count: int

    def __post_init__(self):
        if self.retained_count < 0:
            raise ValueError("retained_count must be non-negative")

    def to_dict(self):
        return {
            "style": self.style,
            "mean_features": self.mean_features.as_dict(),
            "mean_path_length": self.mean_path_length,
            "retained_count": self.retained_count,
        }


def path_length(traj):
    """Sum of chord lengths between consecutive states."""
    return float(np.sum(np.hypot(np.diff(traj.x), np.diff(traj.y))))


def summarize_corpus(retained, styles=STYLE_NAMES):
    """``retained`` is a sequence of ``(style, Trajectory)``; styles without samples are skipped with a warning."""
    groups = {}
    for style, traj in retained:
        groups.setdefault(style, []).append(traj)
    out = []
    for style in list(styles) + sorted(s for s in groups if s not in styles):
        trajs = groups.get(style)
        if not trajs:
            if style in styles:
                warnings.warn(f"style {style} has no retained trajectories; omitted from the summary", stacklevel=2)
            continue
        feats = np.mean([feature_array(t) for t in trajs], axis=0)
        out.append(
            StyleSummary(style, FeatureVector.from_array(feats), float(np.mean([path_length(t) for t in trajs])), len(trajs))
        )
    return out


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    detail: str


def _strict_extreme(values, who, largest):
    mine = values[who]
    others = [v for k, v in values.items() if k != who]
    if largest:
        return all(mine > v for v in others)
    return all(mine < v for v in others)


def check_style_orderings(summaries):
    """Ordinal properties: Sporty fastest and longest, Safety shortest, Comfort smoother than Sporty.

    All comparisons are strict, so ties fail.
    """
    by = {s.style: s for s in summaries}
    missing = [s for s in STYLE_NAMES if s not in by]
    if missing:
        return [Verdict("all_styles_present", False, f"missing styles: {missing}")]
    vel = {k: s.mean_features.v_mean for k, s in by.items() if k in STYLE_NAMES}
    length = {k: s.mean_path_length for k, s in by.items() if k in STYLE_NAMES}
    jerk = {k: s.mean_features.j_rms for k, s in by.items() if k in STYLE_NAMES}

    def show(d):
        return ", ".join(f"{k}={d[k]:.4f}" for k in STYLE_NAMES)

    return [
        Verdict("sporty_max_velocity", _strict_extreme(vel, "Sporty", True), show(vel)),
        Verdict("sporty_max_path_length", _strict_extreme(length, "Sporty", True), show(length)),
        Verdict("safety_min_path_length", _strict_extreme(length, "Safety", False), show(length)),
        Verdict("comfort_jerk_below_sporty", jerk["Comfort"] < jerk["Sporty"], f"Comfort={jerk['Comfort']:.4f}, Sporty={jerk['Sporty']:.4f}"),
    ]


__all__ = ["StyleSummary", "Verdict", "summarize_corpus", "check_style_orderings", "path_length", "FEATURE_NAMES"]
