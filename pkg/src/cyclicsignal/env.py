"""MDP wrapper around the simulator: observations, masked actions, reward.

One decision per cycle boundary. The agent nudges each phase's green by
+5 / -5 / 0 seconds (classes 0 / 1 / 2), the environment runs exactly one
cycle of the adjusted plan and pays a reward mixing throughput, end-of-cycle
queue, green utilization, and green imbalance. Queue length feeds the reward
only; the observation carries flow windows and prior-cycle context.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ActionMaskError, EpisodeFinished, FlowHistoryNotReady
from .sim import (
    HEADWAY_S,
    N_MOVEMENTS,
    N_PHASES,
    Bounds,
    CycleStats,
    FlowProfile,
    IntersectionSim,
    PhasePlan,
    validate_plan,
)

# action class -> seconds added to a phase's green
ACTION_DELTAS = (5, -5, 0)
N_ACTION_CLASSES = 3
# largest possible cycle change in one decision: four +/-5 nudges
MAX_CYCLE_DELTA_S = 20


@dataclass(frozen=True)
class RewardWeights:
    """Per-term weights; negatives penalize. Defaults follow the headline mix."""

    throughput: float = 4e-2
    queue: float = -1e-3
    green_util: float = 1.0
    green_imbalance: float = -1.0


@dataclass
class RewardTerms:
    throughput: float        # vehicles released this cycle
    queue: float             # summed end-of-cycle queue over 8 movements
    green_util: float        # mean per-phase green utilization
    green_imbalance: float   # population std of per-phase utilizations


@dataclass
class Observation:
    """What the agent sees: 8 x 3 movement features and 4 x 3 phase features.

    Movement rows: (flow veh/h, capacity veh/h, existence 0/1).
    Phase rows: (previous green s, green utilization, green imbalance),
    imbalance replicated across phases.
    """

    movement_features: np.ndarray
    phase_features: np.ndarray


def green_utilization(stats: CycleStats) -> tuple[np.ndarray, float, float]:
    """Per-phase utilization v_p * headway / duration_p, its mean, and std."""
    durations = np.asarray(stats.durations, dtype=np.float64)
    per_phase = stats.phase_throughput * HEADWAY_S / durations
    return per_phase, float(np.mean(per_phase)), float(np.std(per_phase))


def compute_reward(stats: CycleStats, weights: RewardWeights) -> tuple[float, RewardTerms]:
    """Weighted mix of the four per-cycle terms."""
    per_phase, gr, gi = green_utilization(stats)
    v = float(stats.phase_throughput.sum())
    l = float(stats.end_queues.sum())
    r = weights.throughput * v + weights.queue * l + weights.green_util * gr + weights.green_imbalance * gi
    return r, RewardTerms(throughput=v, queue=l, green_util=gr, green_imbalance=gi)


def mask_actions(plan: PhasePlan, bounds: Bounds) -> np.ndarray:
    """(4, 3) boolean mask, True where a class is individually admissible.

    +5 / -5 are masked for a phase when applying just that nudge would push
    the phase green or the cycle outside bounds. Keeping (class 2) is always
    allowed, so every row has at least one legal class.
    """
    mask = np.zeros((N_PHASES, N_ACTION_CLASSES), dtype=bool)
    cycle = plan.cycle_time
    for p in range(N_PHASES):
        for cls in (0, 1):
            delta = ACTION_DELTAS[cls]
            green_ok = bounds.min_green <= plan.durations[p] + delta <= bounds.max_green
            cycle_ok = bounds.min_cycle <= cycle + delta <= bounds.max_cycle
            mask[p, cls] = green_ok and cycle_ok
        mask[p, 2] = True
    return mask


def apply_action(plan: PhasePlan, action: np.ndarray, bounds: Bounds) -> PhasePlan:
    """Apply per-phase nudges in phase order, clipping joint cycle overflow.

    The action must respect mask_actions(plan); each individually legal
    nudge is then dropped if the running cycle total would leave bounds.
    """
    action = np.asarray(action)
    if action.shape != (N_PHASES,):
        raise ActionMaskError(f"action must have {N_PHASES} entries, got {action.shape}")
    mask = mask_actions(plan, bounds)
    for p in range(N_PHASES):
        cls = int(action[p])
        if cls not in (0, 1, 2):
            raise ActionMaskError(f"phase {p}: class {cls} not in 0..2")
        if not mask[p, cls]:
            raise ActionMaskError(f"phase {p}: class {cls} is masked for this plan")
    durations = list(plan.durations)
    cycle = plan.cycle_time
    for p in range(N_PHASES):
        delta = ACTION_DELTAS[int(action[p])]
        if delta == 0:
            continue
        if bounds.min_cycle <= cycle + delta <= bounds.max_cycle:
            durations[p] += delta
            cycle += delta
        # else: joint overflow, this phase's nudge is dropped
    new_plan = PhasePlan(tuple(durations), plan.lost_time)
    validate_plan(new_plan, bounds)
    assert abs(new_plan.cycle_time - plan.cycle_time) <= MAX_CYCLE_DELTA_S
    return new_plan


@dataclass
class TraceRow:
    cycle_index: int
    durations: tuple[int, int, int, int]
    cycle_time: int
    flow_vph: float          # total observed flow the decision was based on
    throughput: float
    queue: float
    green_util: float
    green_imbalance: float
    reward: float


TRACE_HEADER = (
    "cycle", "green_a", "green_d", "green_e", "green_h", "cycle_time",
    "flow_vph", "throughput", "queue", "green_util", "green_imbalance", "reward",
)


def write_trace(path, rows: list[TraceRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for r in rows:
            w.writerow(
                [r.cycle_index, *r.durations, r.cycle_time, format(r.flow_vph, ".6g"),
                 format(r.throughput, ".10g"), format(r.queue, ".10g"),
                 format(r.green_util, ".10g"), format(r.green_imbalance, ".10g"),
                 format(r.reward, ".10g")]
            )


class CyclicSignalEnv:
    """Cycle-by-cycle control environment over one flow profile.

    step(action) takes the per-phase class vector; step_plan(plan) lets
    rule-based controllers set a full plan directly. Both run one cycle.
    """

    def __init__(
        self,
        profile: FlowProfile,
        bounds: Bounds | None = None,
        initial_durations: tuple[int, int, int, int] = (25, 25, 25, 25),
        lost_time: int = 4,
        capacity_vph: np.ndarray | float = 450.0,
        present: np.ndarray | None = None,
        observation_window_s: int = 300,
        weights: RewardWeights | None = None,
        seed: int = 0,
    ):
        self.profile = profile
        self.bounds = bounds or Bounds()
        self.lost_time = int(lost_time)
        self.initial_plan = PhasePlan(tuple(int(d) for d in initial_durations), self.lost_time)
        validate_plan(self.initial_plan, self.bounds)
        if present is None:
            present = np.ones(N_MOVEMENTS, dtype=bool)
        self.present = np.asarray(present, dtype=bool)
        cap = np.asarray(capacity_vph, dtype=np.float64)
        if cap.ndim == 0:
            cap = np.full(N_MOVEMENTS, float(cap))
        self.capacity_vph = np.where(self.present, cap, 0.0)
        self.window_s = int(observation_window_s)
        self.weights = weights or RewardWeights()
        self.seed = int(seed)

        self.sim: IntersectionSim | None = None
        self.plan = self.initial_plan
        self.trace: list[TraceRow] = []
        self._done = True
        self._cycle_index = 0
        self._last_stats: CycleStats | None = None
        self._current_flows = np.zeros(N_MOVEMENTS)

    def reset(self) -> Observation:
        self.sim = IntersectionSim(
            self.profile, self.bounds, present=self.present, seed=self.seed
        )
        self.plan = self.initial_plan
        self.trace = []
        self._done = False
        self._cycle_index = 0
        self._last_stats = None
        self._current_flows = np.zeros(N_MOVEMENTS)
        return self._observation()

    @property
    def done(self) -> bool:
        return self._done

    def action_mask(self) -> np.ndarray:
        return mask_actions(self.plan, self.bounds)

    def step(self, action: np.ndarray):
        """Nudge the plan by the action, then run one cycle of it."""
        if self._done:
            raise EpisodeFinished("episode is over; call reset()")
        new_plan = apply_action(self.plan, action, self.bounds)
        return self._advance(new_plan)

    def step_plan(self, plan: PhasePlan):
        """Run one cycle of an externally supplied plan (rule-based control)."""
        if self._done:
            raise EpisodeFinished("episode is over; call reset()")
        validate_plan(plan, self.bounds)
        return self._advance(plan)

    def _advance(self, plan: PhasePlan):
        decision_flow = float(self._current_flows.sum())
        stats = self.sim.run_cycle(plan)
        reward, terms = compute_reward(stats, self.weights)
        self.plan = plan
        self._last_stats = stats
        self.trace.append(
            TraceRow(
                cycle_index=self._cycle_index,
                durations=plan.durations,
                cycle_time=plan.cycle_time,
                flow_vph=decision_flow,
                throughput=terms.throughput,
                queue=terms.queue,
                green_util=terms.green_util,
                green_imbalance=terms.green_imbalance,
                reward=reward,
            )
        )
        self._cycle_index += 1
        obs = self._observation()
        # no admissible next cycle is guaranteed to fit beyond this point
        if self.sim.clock + self.bounds.max_cycle > self.profile.duration_s:
            self._done = True
        info = {"stats": stats, "terms": terms, "flows_vph": self._current_flows.copy()}
        return obs, reward, self._done, info

    def _observation(self) -> Observation:
        try:
            flows = self.sim.measure_flow(self.window_s)
        except FlowHistoryNotReady:
            flows = np.zeros(N_MOVEMENTS)  # warm-up
        self._current_flows = flows
        movement = np.column_stack([flows, self.capacity_vph, self.present.astype(np.float64)])
        if self._last_stats is None:
            gr_p = np.zeros(N_PHASES)
            gi = 0.0
        else:
            gr_p, _, gi = green_utilization(self._last_stats)
        phase = np.column_stack(
            [np.asarray(self.plan.durations, dtype=np.float64), gr_p, np.full(N_PHASES, gi)]
        )
        return Observation(movement_features=movement, phase_features=phase)
