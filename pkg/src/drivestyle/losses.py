"""Hybrid training objective: token CE, weighted regression, kinematic consistency, uncertainty weighting.

Every loss returns ``(value, gradient)`` with analytic gradients so they can be
checked against finite differences without an autodiff framework.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CHANNELS = ("x", "y", "v", "a", "theta")


def _as_states(seq):
    arr = np.asarray(seq.states if hasattr(seq, "states") else seq, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 5:
        raise ValueError(f"expected (T, 5) states, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class PredictedSequence:
    """Predicted or ground-truth kinematic states ``(T, 5)`` over ``(x, y, v, a, theta)``."""

    dt: float
    states: np.ndarray

    def __post_init__(self):
        st = np.array(self.states, dtype=float)
        if st.ndim != 2 or st.shape[1] != 5:
            raise ValueError(f"states must have shape (T, 5), got {st.shape}")
        if len(st) < 2:
            raise ValueError("sequence needs at least 2 states")
        if not np.all(np.isfinite(st)):
            raise ValueError("states must be finite")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        st.setflags(write=False)
        object.__setattr__(self, "states", st)

    def __len__(self):
        return len(self.states)

    @classmethod
    def from_trajectory(cls, traj):
        return cls(traj.dt, traj.kinematic())


@dataclass(frozen=True)
class LossConfig:
    reg_channel_weights: tuple = (2.0, 2.0, 0.5, 0.5, 0.5)
    w_pikc: float = 1.5
    logvar_ce: float = 0.0
    logvar_reg: float = 0.0

    def __post_init__(self):
        w = tuple(float(x) for x in self.reg_channel_weights)
        if len(w) != 5 or min(w) < 0:
            raise ValueError("reg_channel_weights must be 5 non-negative numbers")
        if self.w_pikc < 0:
            raise ValueError("w_pikc must be non-negative")
        object.__setattr__(self, "reg_channel_weights", w)


def ce_loss(logits, targets):
    """Mean token negative log-likelihood; gradient ``(softmax - onehot) / N``."""
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    targets = np.asarray(targets, dtype=int).ravel()
    n, V = logits.shape
    if V < 2:
        raise ValueError("vocabulary must have at least 2 entries")
    if len(targets) != n:
        raise ValueError(f"{n} logit rows but {len(targets)} targets")
    if np.any((targets < 0) | (targets >= V)):
        raise IndexError("target index out of vocabulary")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - logz[:, None]
    rows = np.arange(n)
    value = -logp[rows, targets].mean()
    grad = np.exp(logp)
    grad[rows, targets] -= 1.0
    return float(value), grad / n


def reg_loss(pred, gt, weights=LossConfig().reg_channel_weights):
    """``sum_c w_c * mean_t (pred_c - gt_c)^2`` and its gradient w.r.t. ``pred``."""
    p, g = _as_states(pred), _as_states(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    if hasattr(pred, "dt") and hasattr(gt, "dt") and abs(pred.dt - gt.dt) > 1e-12:
        raise ValueError("pred and gt must share dt")
    w = np.asarray(weights, dtype=float)
    diff = p - g
    T = len(p)
    value = float(np.sum(w * np.mean(diff * diff, axis=0)))
    grad = 2.0 * w * diff / T
    return value, grad


def kinematic_rollout(state, dt):
    """Constant-acceleration position one step ahead of ``(x, y, v, a, theta)``."""
    x, y, v, a, th = (np.asarray(c, dtype=float) for c in np.moveaxis(np.asarray(state, dtype=float), -1, 0))
    step = v * dt + 0.5 * a * dt * dt
    return x + step * np.cos(th), y + step * np.sin(th)


def pikc_loss(pred, dt=None):
    """Mean squared gap between each next position and the rollout of the current state."""
    st = _as_states(pred)
    if dt is None:
        dt = pred.dt
    if len(st) < 2:
        raise ValueError("sequence too short for the consistency loss")
    x, y, v, a, th = st.T
    step = v[:-1] * dt + 0.5 * a[:-1] * dt * dt
    c, s = np.cos(th[:-1]), np.sin(th[:-1])
    rx = x[1:] - (x[:-1] + step * c)
    ry = y[1:] - (y[:-1] + step * s)
    m = len(st) - 1
    value = float(np.sum(rx * rx + ry * ry) / m)

    gx = 2.0 * rx / m
    gy = 2.0 * ry / m
    grad = np.zeros_like(st)
    grad[1:, 0] += gx
    grad[1:, 1] += gy
    grad[:-1, 0] -= gx
    grad[:-1, 1] -= gy
    dproj = -(gx * c + gy * s)  # d value / d step
    grad[:-1, 2] += dproj * dt
    grad[:-1, 3] += dproj * 0.5 * dt * dt
    grad[:-1, 4] += step * (gx * s - gy * c)
    return value, grad


def reg_total(pred, gt, config: LossConfig = LossConfig()):
    """Channel-weighted regression plus ``w_pikc`` times the consistency loss."""
    rv, rg = reg_loss(pred, gt, config.reg_channel_weights)
    if config.w_pikc == 0.0:
        return rv, rg
    pv, pg = pikc_loss(pred)
    return rv + config.w_pikc * pv, rg + config.w_pikc * pg


def hybrid_total(l_ce, l_reg_total, logvar_ce=0.0, logvar_reg=0.0):
    """Homoscedastic combination; returns ``(value, (d/dlogvar_ce, d/dlogvar_reg))``."""
    if l_ce < 0 or l_reg_total < 0:
        raise ValueError("component losses must be non-negative")
    pc = np.exp(-logvar_ce)
    pr = np.exp(-logvar_reg)
    value = (pc * l_ce + 0.5 * logvar_ce) + 0.5 * (pr * l_reg_total + logvar_reg)
    grads = (-pc * l_ce + 0.5, 0.5 * (-pr * l_reg_total + 1.0))
    return float(value), (float(grads[0]), float(grads[1]))


def pairwise_sum(values):
    """Deterministic tree reduction, independent of how batches were split."""
    vals = [float(v) for v in values]
    if not vals:
        return 0.0
    while len(vals) > 1:
        nxt = [vals[i] + vals[i + 1] for i in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]
