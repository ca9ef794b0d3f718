"""Queue-based microsimulator for one signalised intersection under cyclic control.

Eight turning movements (ids 1..8) grouped into four phases served in a fixed
cyclic order A -> D -> E -> H. Time advances in 1 s steps: vehicles arrive by
an inhomogeneous Poisson process driven by a binned flow profile, queue per
movement, and depart during their phase's green window at a fixed saturation
headway. Everything is integer-counted so vehicle conservation is exact.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import FlowHistoryNotReady, InvalidPlanError, ProfileError

MOVEMENTS = tuple(range(1, 9))
N_MOVEMENTS = 8

# saturation headway: one vehicle may leave a moving queue every 2.5 s of green
HEADWAY_S = 2.5
# all green durations live on a 5 s grid
DURATION_STEP_S = 5
DEFAULT_LOST_TIME_S = 4


class Phase(enum.Enum):
    A = "A"
    D = "D"
    E = "E"
    H = "H"


PHASE_ORDER = (Phase.A, Phase.D, Phase.E, Phase.H)
N_PHASES = 4

# Standard non-conflicting pairing: A and E carry the two through pairs,
# D and H the two left-turn pairs.
PHASE_MOVEMENTS: dict[Phase, tuple[int, int]] = {
    Phase.A: (1, 5),
    Phase.D: (3, 7),
    Phase.E: (2, 6),
    Phase.H: (4, 8),
}


@dataclass(frozen=True)
class Bounds:
    """Admissible range for per-phase greens and for the whole cycle."""

    min_green: int = 10
    max_green: int = 90
    min_cycle: int = 60
    max_cycle: int = 180

    def __post_init__(self):
        if not 0 < self.min_green <= self.max_green:
            raise InvalidPlanError(f"bad green bounds {self.min_green}..{self.max_green}")
        if not 0 < self.min_cycle <= self.max_cycle:
            raise InvalidPlanError(f"bad cycle bounds {self.min_cycle}..{self.max_cycle}")


@dataclass(frozen=True)
class PhasePlan:
    """Green durations for phases A, D, E, H plus the per-phase lost time.

    The cycle runs each phase's green in order, with lost_time of dead time
    after every phase, so cycle_time = sum(durations) + 4 * lost_time.
    """

    durations: tuple[int, int, int, int]
    lost_time: int = DEFAULT_LOST_TIME_S

    @property
    def cycle_time(self) -> int:
        return int(sum(self.durations)) + N_PHASES * self.lost_time

    def replace_duration(self, phase_idx: int, seconds: int) -> "PhasePlan":
        d = list(self.durations)
        d[phase_idx] = seconds
        return PhasePlan(tuple(d), self.lost_time)


def validate_plan(plan: PhasePlan, bounds: Bounds) -> None:
    """Raise InvalidPlanError unless the plan satisfies every invariant."""
    if len(plan.durations) != N_PHASES:
        raise InvalidPlanError(f"plan needs {N_PHASES} durations, got {len(plan.durations)}")
    if plan.lost_time < 0:
        raise InvalidPlanError("negative lost time")
    for phase, d in zip(PHASE_ORDER, plan.durations):
        if int(d) != d or d % DURATION_STEP_S != 0:
            raise InvalidPlanError(f"phase {phase.value} green {d} s not on the {DURATION_STEP_S} s grid")
        if not bounds.min_green <= d <= bounds.max_green:
            raise InvalidPlanError(
                f"phase {phase.value} green {d} s outside [{bounds.min_green}, {bounds.max_green}]"
            )
    ct = plan.cycle_time
    if not bounds.min_cycle <= ct <= bounds.max_cycle:
        raise InvalidPlanError(f"cycle {ct} s outside [{bounds.min_cycle}, {bounds.max_cycle}]")


def phase_windows(plan: PhasePlan) -> list[tuple[Phase, int, int]]:
    """Green window [start, end) of each phase within one cycle, in served order."""
    windows = []
    t = 0
    for phase, d in zip(PHASE_ORDER, plan.durations):
        windows.append((phase, t, t + d))
        t += d + plan.lost_time
    return windows


@dataclass
class FlowProfile:
    """Per-movement arrival rates (veh/h) on a fixed time grid.

    rates_vph has shape (n_bins, 8); bin_s is the bin width in seconds.
    """

    rates_vph: np.ndarray
    bin_s: int = 300

    def __post_init__(self):
        self.rates_vph = np.asarray(self.rates_vph, dtype=np.float64)
        if self.rates_vph.ndim != 2 or self.rates_vph.shape[1] != N_MOVEMENTS:
            raise ProfileError(f"rates must be (n_bins, {N_MOVEMENTS}), got {self.rates_vph.shape}")
        if self.rates_vph.shape[0] == 0:
            raise ProfileError("empty profile")
        if (self.rates_vph < 0).any():
            raise ProfileError("negative arrival rate")
        if self.bin_s <= 0:
            raise ProfileError("bin width must be positive")

    @property
    def n_bins(self) -> int:
        return self.rates_vph.shape[0]

    @property
    def duration_s(self) -> int:
        return self.n_bins * self.bin_s

    def rate_at(self, clock_s: int) -> np.ndarray:
        """Arrival rate row (veh/h per movement) in force at the given second."""
        if not 0 <= clock_s < self.duration_s:
            raise ProfileError(f"clock {clock_s} outside profile horizon {self.duration_s}")
        return self.rates_vph[clock_s // self.bin_s]

    def save(self, path) -> None:
        """Write the comma-separated profile format.

        Line 1 is a comment documenting the bin width, line 2 a header naming
        the eight movements, then one row of veh/h values per bin.
        """
        with open(path, "w", newline="") as fh:
            fh.write(f"# flow profile, bin_s={self.bin_s}\n")
            writer = csv.writer(fh)
            writer.writerow([f"m{m}" for m in MOVEMENTS])
            for row in self.rates_vph:
                writer.writerow([format(x, ".6g") for x in row])

    @classmethod
    def load(cls, path) -> "FlowProfile":
        with open(path, newline="") as fh:
            first = fh.readline().strip()
            if not first.startswith("#") or "bin_s=" not in first:
                raise ProfileError(f"{path}: missing bin width comment line")
            try:
                bin_s = int(first.split("bin_s=")[1].split()[0])
            except ValueError as exc:
                raise ProfileError(f"{path}: bad bin width: {first}") from exc
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != [f"m{m}" for m in MOVEMENTS]:
                raise ProfileError(f"{path}: bad header {header}")
            try:
                rows = [[float(x) for x in row] for row in reader if row]
            except ValueError as exc:
                raise ProfileError(f"{path}: non-numeric rate") from exc
        return cls(np.array(rows, dtype=np.float64), bin_s)


@dataclass
class CycleStats:
    """What one executed cycle produced, as needed by reward and reporting."""

    durations: tuple[int, int, int, int]
    lost_time: int
    cycle_time: int
    phase_throughput: np.ndarray  # (4,) vehicles released per phase
    end_queues: np.ndarray        # (8,) queue per movement at cycle end
    arrivals: np.ndarray          # (8,) arrivals during the cycle
    start_clock: int = 0

    @property
    def green_used_s(self) -> np.ndarray:
        """Effective green seconds consumed per phase at saturation headway."""
        return self.phase_throughput * HEADWAY_S


class IntersectionSim:
    """Seeded second-by-second intersection dynamics.

    All counters are integers; cum_arrivals == cum_departures + queues holds
    after every step. Two simulators built with the same seed, profile, and
    plan sequence produce bit-identical counters.
    """

    def __init__(
        self,
        profile: FlowProfile,
        bounds: Bounds | None = None,
        present: np.ndarray | None = None,
        pairing: dict[Phase, tuple[int, int]] | None = None,
        seed: int = 0,
    ):
        self.profile = profile
        self.bounds = bounds or Bounds()
        if present is None:
            present = np.ones(N_MOVEMENTS, dtype=bool)
        self.present = np.asarray(present, dtype=bool)
        if self.present.shape != (N_MOVEMENTS,):
            raise ProfileError("present mask must have 8 entries")
        self.pairing = dict(pairing or PHASE_MOVEMENTS)
        self._rng = np.random.default_rng(seed)

        self.clock = 0
        self.queues = np.zeros(N_MOVEMENTS, dtype=np.int64)
        self.cum_arrivals = np.zeros(N_MOVEMENTS, dtype=np.int64)
        self.cum_departures = np.zeros(N_MOVEMENTS, dtype=np.int64)
        # per-second arrival log over the whole profile horizon, for measure_flow
        self._arrival_log = np.zeros((profile.duration_s, N_MOVEMENTS), dtype=np.int64)

        self._plan: PhasePlan | None = None
        self._cycle_pos = 0
        self._windows: list[tuple[Phase, int, int]] = []
        self._phase_departed = np.zeros(N_MOVEMENTS, dtype=np.int64)
        self._phase_throughput = np.zeros(N_PHASES, dtype=np.int64)
        self._window_idx = -1

    # -- plan control -----------------------------------------------------

    def begin_cycle(self, plan: PhasePlan) -> None:
        """Arm a plan and rewind the cycle position to its start."""
        validate_plan(plan, self.bounds)
        self._plan = plan
        self._restart_cycle()

    def _restart_cycle(self):
        self._cycle_pos = 0
        self._windows = phase_windows(self._plan)
        self._phase_departed[:] = 0
        self._phase_throughput[:] = 0
        self._window_idx = -1

    def _active_window(self) -> int | None:
        """Index of the green window covering the current cycle position, else None."""
        for i, (_, start, end) in enumerate(self._windows):
            if start <= self._cycle_pos < end:
                return i
        return None

    # -- dynamics ---------------------------------------------------------

    def step_second(self) -> None:
        """Advance one second: sample arrivals, then serve the active green."""
        plan = self._plan
        if plan is None:
            raise InvalidPlanError("no active plan; call begin_cycle or run_cycle first")
        validate_plan(plan, self.bounds)
        if self.clock >= self.profile.duration_s:
            raise ProfileError("flow profile exhausted")

        if self._cycle_pos >= plan.cycle_time:
            # the plan repeats cyclically until replaced
            self._restart_cycle()

        lam = self.profile.rate_at(self.clock) * self.present / 3600.0
        arrivals = self._rng.poisson(lam)
        self.queues += arrivals
        self.cum_arrivals += arrivals
        self._arrival_log[self.clock] = arrivals

        widx = self._active_window()
        if widx is not None:
            phase, start, _ = self._windows[widx]
            if widx != self._window_idx:
                # fresh green: per-phase departure budget restarts
                self._phase_departed[:] = 0
                self._window_idx = widx
            elapsed = self._cycle_pos - start + 1
            slots = int(elapsed / HEADWAY_S)
            for m in self.pairing[phase]:
                i = m - 1
                allowed = slots - self._phase_departed[i]
                if allowed <= 0:
                    continue
                dep = min(allowed, int(self.queues[i]))
                if dep > 0:
                    self.queues[i] -= dep
                    self.cum_departures[i] += dep
                    self._phase_departed[i] += dep
                    self._phase_throughput[self._phase_index(phase)] += dep

        self._cycle_pos += 1
        self.clock += 1

    @staticmethod
    def _phase_index(phase: Phase) -> int:
        return PHASE_ORDER.index(phase)

    def run_cycle(self, plan: PhasePlan) -> CycleStats:
        """Execute exactly one full cycle of the given plan."""
        validate_plan(plan, self.bounds)
        if self.clock + plan.cycle_time > self.profile.duration_s:
            raise ProfileError(
                f"profile has {self.profile.duration_s - self.clock} s left, "
                f"cycle needs {plan.cycle_time} s"
            )
        start_clock = self.clock
        arrivals_before = self.cum_arrivals.copy()
        self.begin_cycle(plan)
        for _ in range(plan.cycle_time):
            self.step_second()
        stats = CycleStats(
            durations=plan.durations,
            lost_time=plan.lost_time,
            cycle_time=plan.cycle_time,
            phase_throughput=self._phase_throughput.copy(),
            end_queues=self.queues.copy(),
            arrivals=self.cum_arrivals - arrivals_before,
            start_clock=start_clock,
        )
        self._plan = None
        return stats

    # -- observables ------------------------------------------------------

    def measure_flow(self, window_s: int) -> np.ndarray:
        """Arrivals over the trailing window scaled to veh/h per movement.

        This is the only traffic observable exported to controllers; queue
        counters stay private to reward computation.
        """
        if window_s <= 0:
            raise ValueError("window must be positive")
        if self.clock < window_s:
            raise FlowHistoryNotReady(f"need {window_s} s of history, have {self.clock}")
        counts = self._arrival_log[self.clock - window_s : self.clock].sum(axis=0)
        return counts * (3600.0 / window_s)

    def conservation_ok(self) -> bool:
        return bool(np.array_equal(self.cum_arrivals, self.cum_departures + self.queues))
