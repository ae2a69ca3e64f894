"""Style-conditioned candidate selection and receding-horizon scenario planning."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .costs import (
    CostVector,
    StyleProfile,
    kinematic_cost_matrix,
    phantom_cost_matrix,
    visibility_cost_matrix,
)
from .sampler import FrenetState, SamplerConfig, generate_candidates, ego_to_frenet
from .scenario import Scenario, TrajState, Trajectory

HISTORY_STEPS = 6
HISTORY_DT = 0.1


class PlannerFailure(RuntimeError):
    """No feasible candidate; ``counts`` maps infeasibility reason to candidate count."""

    def __init__(self, counts, step=None):
        self.counts = dict(counts)
        self.step = step
        where = "" if step is None else f" at step {step}"
        super().__init__(f"no feasible trajectory{where}; rejected by reason: {self.counts}")


@dataclass(frozen=True)
class CandidateCost:
    index: int
    costs: CostVector
    total: float


def cost_matrix(candidates, scenario: Scenario, v_desired, perception=True):
    """``(C, 6)`` cost components for a list of candidates sharing one time grid.

    ``perception`` is a bool or a ``(phantom, visibility)`` pair of flags;
    disabled terms are reported as zero.
    """
    if not candidates:
        return np.zeros((0, 6))
    data = np.stack([c.cartesian.data for c in candidates])
    dt = candidates[0].cartesian.dt
    t, x, y, v, a, th = (data[..., i] for i in range(6))
    clearance = np.stack(
        [c.clearance if c.clearance is not None else np.full(len(c.cartesian), np.inf) for c in candidates]
    )
    kin = np.maximum(kinematic_cost_matrix(x, y, v, a, th, dt, v_desired, clearance), 0.0)
    ext = np.zeros((len(candidates), 2))
    if perception is True:
        perception = (True, True)
    elif perception is False:
        perception = (False, False)
    if scenario.obstacles:
        if perception[0]:
            ext[:, 0] = phantom_cost_matrix(scenario, t[0], x, y, th, v)
        if perception[1]:
            ext[:, 1] = visibility_cost_matrix(scenario, t[0], x, y)
    return np.concatenate([kin, ext], axis=1)


def _select_index(candidates, profile, scenario, v_desired, perception=True):
    feasible = [i for i, c in enumerate(candidates) if c.feasible]
    if not feasible:
        counts = Counter(c.infeasibility_reason for c in candidates)
        raise PlannerFailure(sorted(counts.items()))
    pool = [candidates[i] for i in feasible]
    # terms with zero weight cannot change the argmin, so they are not evaluated
    use_ext = tuple(bool(perception) and w != 0.0 for w in profile.w_ext)
    comps = cost_matrix(pool, scenario, v_desired, perception=use_ext)
    totals = comps @ profile.weights
    best = int(np.argmin(totals))  # first minimum in candidate order
    breakdown = [
        CandidateCost(i, CostVector(tuple(row[:4]), tuple(row[4:])), float(tot))
        for i, row, tot in zip(feasible, comps, totals)
    ]
    return feasible[best], breakdown


def select_best(candidates, profile: StyleProfile, scenario: Scenario, v_desired, perception=True):
    """Lowest-cost feasible candidate; returns ``(winner_trajectory, per_candidate_costs)``.

    Infeasible entries in ``candidates`` are skipped but counted for the
    failure report when nothing is feasible.
    """
    idx, breakdown = _select_index(candidates, profile, scenario, v_desired, perception)
    return candidates[idx].cartesian, breakdown


@dataclass(frozen=True, eq=False)
class PlanningInstance:
    scenario_id: str
    style: str
    step: int
    time: float
    ego: TrajState
    ego_frenet: FrenetState
    history: tuple  # HISTORY_STEPS TrajStates, t relative to the instance
    trajectory: Trajectory
    cost: float

    def __eq__(self, other):
        return (
            isinstance(other, PlanningInstance)
            and (self.scenario_id, self.style, self.step, self.time, self.ego, tuple(self.ego_frenet), self.history, self.cost)
            == (other.scenario_id, other.style, other.step, other.time, other.ego, tuple(other.ego_frenet), other.history, other.cost)
            and self.trajectory == other.trajectory
        )


def _history(executed, ego):
    """Last 0.5 s of executed states at 10 Hz; earlier gaps back-extrapolated at constant velocity."""
    out = []
    for k in range(HISTORY_STEPS - 1, -1, -1):
        back = k * HISTORY_DT
        if len(executed) > k:
            st = executed[-1 - k]
            out.append(TrajState(-back, st.x, st.y, st.v, st.a, st.theta))
        else:
            first = executed[0]
            extra = back - (len(executed) - 1) * HISTORY_DT
            out.append(
                TrajState(
                    -back,
                    first.x - first.v * np.cos(first.theta) * extra,
                    first.y - first.v * np.sin(first.theta) * extra,
                    first.v,
                    0.0,
                    first.theta,
                )
            )
    return tuple(out)


def plan_scenario(
    scenario: Scenario,
    profile: StyleProfile,
    replan_dt=0.5,
    config: SamplerConfig | None = None,
    perception=True,
):
    """Receding-horizon planning over the scenario.

    Each step selects the lowest-cost trajectory, executes it for
    ``replan_dt`` and replans, until the duration elapses or the ego enters
    the goal region.
    """
    if replan_dt <= 0:
        raise ValueError("replan_dt must be positive")
    if config is None:
        config = SamplerConfig.default(scenario.desired_speed)
    k_exec = int(round(replan_dt / config.dt))
    if abs(k_exec * config.dt - replan_dt) > 1e-9:
        raise ValueError("replan_dt must be a multiple of the planner dt")
    v_des = scenario.desired_speed

    ego = scenario.ego_init
    ego_frenet = ego_to_frenet(scenario, ego)
    executed = [ego]
    instances = []
    step = 0
    while ego.t < scenario.duration - 1e-9:
        if scenario.goal.contains(ego.x, ego.y):
            break
        candidates, _ = generate_candidates(scenario, ego, config, ego_frenet=ego_frenet)
        try:
            idx, breakdown = _select_index(candidates, profile, scenario, v_des, perception)
        except PlannerFailure as exc:
            raise PlannerFailure(exc.counts, step=step) from None
        chosen = candidates[idx]
        total = next(b.total for b in breakdown if b.index == idx)
        instances.append(
            PlanningInstance(
                scenario.id,
                profile.name,
                step,
                round(step * replan_dt, 9),
                ego,
                ego_frenet,
                _history(executed, ego),
                chosen.cartesian,
                total,
            )
        )
        traj = chosen.cartesian
        k = min(k_exec, len(traj) - 1)
        executed.extend(traj.state(i) for i in range(1, k + 1))
        ego = traj.state(k)
        ego_frenet = chosen.frenet_state(k)
        step += 1
    return instances
