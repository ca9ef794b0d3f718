"""Rule-based signal controllers and the labels they supply for cloning.

Five controller families: fixed-time, Webster's delay-minimizing cycle,
a linear flow-to-duration rule, a logistic flow-to-cycle curve, and a
SCATS-like three-stage curve (stairs, steep climb, shallow peak ramp).
The last three double as curriculum teachers, ordered easy -> hard.

Every controller emits a valid PhasePlan: a scalar cycle target on the 5 s
grid is split across phases proportionally to per-phase flow with min_green
floors, max_green caps, and deterministic tie-breaks in phase order.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidPlanError, SaturationError
from .sim import (
    DURATION_STEP_S,
    HEADWAY_S,
    N_MOVEMENTS,
    N_PHASES,
    PHASE_MOVEMENTS,
    PHASE_ORDER,
    Bounds,
    PhasePlan,
    validate_plan,
)

# one movement saturates at 3600 / headway vehicles per hour of green
SATURATION_FLOW_VPH = 3600.0 / HEADWAY_S


class TeacherKind(enum.Enum):
    FIXED_TIME = "fixed_time"
    WEBSTER = "webster"
    LINEAR = "linear"
    LOGISTIC = "logistic"
    SCATS_LIKE = "scats_like"


# curriculum difficulty; only these kinds may appear in a training schedule
GUIDE_ORDER = (TeacherKind.LINEAR, TeacherKind.LOGISTIC, TeacherKind.SCATS_LIKE)


def quantize_duration(seconds: float) -> int:
    """Round to the nearest 5 s, halves up. 14 -> 15, 42 -> 40, 12.5 -> 15."""
    return int(DURATION_STEP_S * math.floor(seconds / DURATION_STEP_S + 0.5))


def phase_flows(movement_flows_vph: np.ndarray) -> np.ndarray:
    """Sum the two member movements of each phase, in A, D, E, H order."""
    f = np.asarray(movement_flows_vph, dtype=np.float64)
    if f.shape != (N_MOVEMENTS,):
        raise ValueError(f"need {N_MOVEMENTS} movement flows, got {f.shape}")
    return np.array([f[a - 1] + f[b - 1] for a, b in (PHASE_MOVEMENTS[p] for p in PHASE_ORDER)])


# -- cycle-level rules ----------------------------------------------------


def webster_cycle(loss_time_s: float, critical_ratio_sum: float, bounds: Bounds) -> float:
    """Webster's optimum cycle (1.5 L + 5) / (1 - Y), clamped to the cycle bounds.

    Y is the sum of per-phase critical flow ratios. Y >= 1 means the
    intersection is saturated and no finite cycle exists; callers fall back
    to max_cycle.
    """
    if loss_time_s <= 0:
        raise ValueError("loss time must be positive")
    if critical_ratio_sum < 0:
        raise ValueError("critical flow ratio sum must be >= 0")
    if critical_ratio_sum >= 1.0:
        raise SaturationError(f"critical flow ratio sum {critical_ratio_sum} >= 1")
    c = (1.5 * loss_time_s + 5.0) / (1.0 - critical_ratio_sum)
    return float(min(max(c, bounds.min_cycle), bounds.max_cycle))


@dataclass(frozen=True)
class LogisticConfig:
    """Cycle responds to total flow along a sigmoid between cmin and cmax."""

    midpoint_vph: float
    width_vph: float
    cmin_s: float = 60.0
    cmax_s: float = 180.0

    def __post_init__(self):
        if self.width_vph <= 0:
            raise ValueError("logistic width must be positive")
        if not self.cmin_s < self.cmax_s:
            raise ValueError("need cmin < cmax")


def logistic_curve(total_flow_vph: float, cfg: LogisticConfig) -> float:
    """Unquantized cycle value cmin + (cmax - cmin) * sigmoid((I - I0) / width)."""
    x = (total_flow_vph - cfg.midpoint_vph) / cfg.width_vph
    sig = 1.0 / (1.0 + math.exp(-x))
    return cfg.cmin_s + (cfg.cmax_s - cfg.cmin_s) * sig


def logistic_cycle(total_flow_vph: float, cfg: LogisticConfig, bounds: Bounds) -> int:
    c = quantize_duration(logistic_curve(total_flow_vph, cfg))
    return int(min(max(c, bounds.min_cycle), bounds.max_cycle))


@dataclass(frozen=True)
class ScatsConfig:
    """Three-stage cycle curve.

    Below the first three breakpoints the cycle steps through
    min_ct / alt_min_1 / alt_min_2 (the non-peak stairs). Over
    [breakpoints[2], breakpoints[3]) it climbs linearly to stretch_ct
    (the steep stage). From breakpoints[3] it ramps linearly toward max_ct,
    saturating at saturation_flow_vph.
    """

    min_ct: int = 60
    alt_min_1: int = 70
    alt_min_2: int = 80
    stretch_ct: int = 150
    max_ct: int = 180
    breakpoints_vph: tuple[float, float, float, float] = (900.0, 1620.0, 2160.0, 3060.0)
    saturation_flow_vph: float = 3600.0

    def __post_init__(self):
        cts = (self.min_ct, self.alt_min_1, self.alt_min_2, self.stretch_ct, self.max_ct)
        if any(c % DURATION_STEP_S for c in cts):
            raise ValueError(f"cycle values must sit on the {DURATION_STEP_S} s grid: {cts}")
        if not all(a < b for a, b in zip(cts, cts[1:])):
            raise ValueError(f"cycle values must strictly increase: {cts}")
        bps = self.breakpoints_vph
        if len(bps) != 4 or not all(a < b for a, b in zip(bps, bps[1:])):
            raise ValueError(f"breakpoints must be 4 strictly increasing flows: {bps}")
        if bps[0] < 0:
            raise ValueError("breakpoints must be non-negative")
        if self.saturation_flow_vph <= bps[-1]:
            raise ValueError("saturation flow must exceed the last breakpoint")


def scats_cycle(total_flow_vph: float, cfg: ScatsConfig) -> int:
    """SCATS-like cycle for a total flow, quantized to the 5 s grid."""
    b1, b2, b3, b4 = cfg.breakpoints_vph
    flow = float(total_flow_vph)
    if flow < b1:
        c = float(cfg.min_ct)
    elif flow < b2:
        c = float(cfg.alt_min_1)
    elif flow < b3:
        c = float(cfg.alt_min_2)
    elif flow < b4:
        # steep climb from the last stair to the stretch cycle
        c = cfg.alt_min_2 + (cfg.stretch_ct - cfg.alt_min_2) * (flow - b3) / (b4 - b3)
    else:
        frac = (flow - b4) / (cfg.saturation_flow_vph - b4)
        c = cfg.stretch_ct + (cfg.max_ct - cfg.stretch_ct) * min(1.0, frac)
    return quantize_duration(c)


# -- splitting a cycle into phase durations -------------------------------


def _allocate_units(units: int, weights: np.ndarray, cap_units: int) -> np.ndarray:
    """Deterministically share `units` 5 s blocks among 4 phases by weight.

    Proportional with per-phase caps; leftover blocks go to the largest
    remaining quota, ties to the earliest phase.
    """
    alloc = np.zeros(N_PHASES, dtype=np.int64)
    w = np.maximum(np.asarray(weights, dtype=np.float64), 0.0)
    remaining = int(units)
    while remaining > 0:
        open_idx = [i for i in range(N_PHASES) if alloc[i] < cap_units]
        if not open_idx:
            break
        wo = w[open_idx]
        if wo.sum() <= 0:
            wo = np.ones(len(open_idx))
        quota = remaining * wo / wo.sum()
        gave = 0
        for q, i in zip(quota, open_idx):
            g = min(int(q), cap_units - int(alloc[i]))
            alloc[i] += g
            gave += g
        if gave == 0:
            j = max(range(len(open_idx)), key=lambda k: (quota[k], -open_idx[k]))
            alloc[open_idx[j]] += 1
            gave = 1
        remaining -= gave
    return alloc


def _green_budget(cycle_s: float, bounds: Bounds, lost_time: int) -> int:
    """Quantized total green implied by a cycle target, clamped to feasibility."""
    lo = bounds.min_cycle - N_PHASES * lost_time
    hi = bounds.max_cycle - N_PHASES * lost_time
    lo = max(lo, N_PHASES * bounds.min_green)
    hi = min(hi, N_PHASES * bounds.max_green)
    # smallest/largest feasible multiples of the grid
    lo_q = int(math.ceil(lo / DURATION_STEP_S) * DURATION_STEP_S)
    hi_q = int(math.floor(hi / DURATION_STEP_S) * DURATION_STEP_S)
    if lo_q > hi_q:
        raise InvalidPlanError("bounds leave no feasible green budget")
    target = quantize_duration(cycle_s - N_PHASES * lost_time)
    return int(min(max(target, lo_q), hi_q))


def split_cycle(
    cycle_s: float,
    phase_flows_vph: np.ndarray,
    bounds: Bounds,
    lost_time: int = 4,
) -> PhasePlan:
    """Turn a scalar cycle target into a valid plan, greens proportional to flow."""
    budget = _green_budget(cycle_s, bounds, lost_time)
    base = N_PHASES * bounds.min_green
    units = (budget - base) // DURATION_STEP_S
    cap_units = (bounds.max_green - bounds.min_green) // DURATION_STEP_S
    alloc = _allocate_units(units, phase_flows_vph, cap_units)
    durations = tuple(int(bounds.min_green + DURATION_STEP_S * a) for a in alloc)
    plan = PhasePlan(durations, lost_time)
    validate_plan(plan, bounds)
    return plan


def fit_cycle(durations: tuple[int, ...], bounds: Bounds, lost_time: int = 4) -> PhasePlan:
    """Bring independently chosen per-phase greens inside the cycle bounds.

    Proportional rescale, re-quantize, then nudge the largest phase by 5 s
    steps until the cycle fits. Greens already in range pass through as-is.
    """
    d = [int(x) for x in durations]
    lo = bounds.min_cycle - N_PHASES * lost_time
    hi = bounds.max_cycle - N_PHASES * lost_time
    total = sum(d)
    if not lo <= total <= hi:
        target = min(max(total, lo), hi)
        scale = target / total
        d = [
            min(max(quantize_duration(x * scale), bounds.min_green), bounds.max_green)
            for x in d
        ]
    while sum(d) > hi:
        i = max(range(N_PHASES), key=lambda k: (d[k], -k))
        if d[i] - DURATION_STEP_S < bounds.min_green:
            raise InvalidPlanError("cannot fit plan under max cycle")
        d[i] -= DURATION_STEP_S
    while sum(d) < lo:
        i = max(range(N_PHASES), key=lambda k: (d[k], -k))
        if d[i] + DURATION_STEP_S > bounds.max_green:
            i = min(
                (k for k in range(N_PHASES) if d[k] + DURATION_STEP_S <= bounds.max_green),
                default=None,
            )
            if i is None:
                raise InvalidPlanError("cannot fit plan over min cycle")
        d[i] += DURATION_STEP_S
    plan = PhasePlan(tuple(d), lost_time)
    validate_plan(plan, bounds)
    return plan


# -- teacher labels -------------------------------------------------------


def teacher_label(expert_s: float, previous_s: float) -> int:
    """Class the expert's duration against the agent's previous one.

    0: expert wants at least 5 s more (+5), 1: at least 5 s less (-5),
    2: within one step (keep). Exactly one branch fires for any pair.
    """
    if expert_s - 5.0 >= previous_s:
        return 0
    if expert_s + 5.0 <= previous_s:
        return 1
    return 2


def plan_labels(expert: PhasePlan, previous: PhasePlan) -> np.ndarray:
    return np.array(
        [teacher_label(e, p) for e, p in zip(expert.durations, previous.durations)],
        dtype=np.int64,
    )


# -- controller classes ---------------------------------------------------


class Teacher:
    """A stateless mapping from observed movement flows to a target plan."""

    kind: TeacherKind

    def __init__(self, bounds: Bounds, lost_time: int = 4):
        self.bounds = bounds
        self.lost_time = lost_time

    def target_plan(self, movement_flows_vph: np.ndarray) -> PhasePlan:
        raise NotImplementedError


class FixedTimeTeacher(Teacher):
    kind = TeacherKind.FIXED_TIME

    def __init__(self, bounds: Bounds, lost_time: int = 4, durations=(30, 30, 30, 30)):
        super().__init__(bounds, lost_time)
        self._plan = PhasePlan(tuple(int(d) for d in durations), lost_time)
        validate_plan(self._plan, bounds)

    def target_plan(self, movement_flows_vph) -> PhasePlan:
        return self._plan


class WebsterTeacher(Teacher):
    kind = TeacherKind.WEBSTER

    def __init__(self, bounds: Bounds, lost_time: int = 4, saturation_vph: float = SATURATION_FLOW_VPH):
        super().__init__(bounds, lost_time)
        self.saturation_vph = float(saturation_vph)

    def critical_flows(self, movement_flows_vph) -> np.ndarray:
        f = np.asarray(movement_flows_vph, dtype=np.float64)
        return np.array(
            [max(f[a - 1], f[b - 1]) for a, b in (PHASE_MOVEMENTS[p] for p in PHASE_ORDER)]
        )

    def target_plan(self, movement_flows_vph) -> PhasePlan:
        crit = self.critical_flows(movement_flows_vph)
        y = float(crit.sum() / self.saturation_vph)
        loss = N_PHASES * self.lost_time
        try:
            cycle = webster_cycle(loss, y, self.bounds)
        except SaturationError:
            cycle = float(self.bounds.max_cycle)
        return split_cycle(cycle, crit, self.bounds, self.lost_time)


class LinearTeacher(Teacher):
    """Per-phase green proportional to per-phase volume over one window."""

    kind = TeacherKind.LINEAR

    def __init__(self, bounds: Bounds, lost_time: int = 4, coefficient: float = 0.35, window_s: int = 300):
        super().__init__(bounds, lost_time)
        if coefficient <= 0:
            raise ValueError("coefficient must be positive")
        self.coefficient = float(coefficient)
        self.window_s = int(window_s)

    def durations_for(self, phase_volumes: np.ndarray) -> tuple[int, int, int, int]:
        """Raw per-phase rule: quantize(coeff * volume) clamped to green bounds."""
        out = []
        for v in np.asarray(phase_volumes, dtype=np.float64):
            d = quantize_duration(self.coefficient * float(v))
            out.append(int(min(max(d, self.bounds.min_green), self.bounds.max_green)))
        return tuple(out)

    def target_plan(self, movement_flows_vph) -> PhasePlan:
        volumes = phase_flows(movement_flows_vph) * (self.window_s / 3600.0)
        return fit_cycle(self.durations_for(volumes), self.bounds, self.lost_time)


class LogisticTeacher(Teacher):
    kind = TeacherKind.LOGISTIC

    def __init__(self, bounds: Bounds, lost_time: int = 4, cfg: LogisticConfig | None = None):
        super().__init__(bounds, lost_time)
        self.cfg = cfg or LogisticConfig(midpoint_vph=2160.0, width_vph=540.0,
                                         cmin_s=bounds.min_cycle, cmax_s=bounds.max_cycle)

    def target_plan(self, movement_flows_vph) -> PhasePlan:
        pf = phase_flows(movement_flows_vph)
        cycle = logistic_cycle(float(pf.sum()), self.cfg, self.bounds)
        return split_cycle(cycle, pf, self.bounds, self.lost_time)


class ScatsLikeTeacher(Teacher):
    kind = TeacherKind.SCATS_LIKE

    def __init__(self, bounds: Bounds, lost_time: int = 4, cfg: ScatsConfig | None = None):
        super().__init__(bounds, lost_time)
        self.cfg = cfg or ScatsConfig()
        for ct in (self.cfg.min_ct, self.cfg.max_ct):
            if not bounds.min_cycle <= ct <= bounds.max_cycle:
                raise ValueError(f"scats cycle value {ct} outside cycle bounds")

    def target_plan(self, movement_flows_vph) -> PhasePlan:
        pf = phase_flows(movement_flows_vph)
        cycle = scats_cycle(float(pf.sum()), self.cfg)
        return split_cycle(cycle, pf, self.bounds, self.lost_time)


def scats_sweep(cfg: ScatsConfig, flows_vph) -> list[tuple[float, int]]:
    """(flow, cycle) table of the curve, for export and fixture comparison."""
    return [(float(f), scats_cycle(float(f), cfg)) for f in flows_vph]
