"""Builders for demand profiles: constants, stage ramps, staircases, jitter.

All builders produce FlowProfile objects (veh/h per movement per bin). Totals
are split across movements by a relative mix, straight-through movements
getting twice the weight of turns by default.
"""
from __future__ import annotations

import numpy as np

from .sim import N_MOVEMENTS, FlowProfile

# relative demand weights for movements 1..8 (through pairs heavier than turns)
DEFAULT_MIX = (1.0, 1.0, 0.5, 0.5, 1.0, 1.0, 0.5, 0.5)


def movement_rates(
    total_vph: float,
    mix=DEFAULT_MIX,
    present=None,
) -> np.ndarray:
    """Split a total intersection flow across present movements by mix weight."""
    mix = np.asarray(mix, dtype=np.float64)
    if mix.shape != (N_MOVEMENTS,):
        raise ValueError(f"mix must have {N_MOVEMENTS} entries, got {mix.shape}")
    if present is None:
        present = np.ones(N_MOVEMENTS)
    weights = mix * np.asarray(present, dtype=np.float64)
    s = weights.sum()
    if s <= 0:
        raise ValueError("no present movement has positive mix weight")
    return float(total_vph) * weights / s


def constant_profile(
    total_vph: float,
    duration_s: int,
    bin_s: int = 300,
    mix=DEFAULT_MIX,
    present=None,
) -> FlowProfile:
    if duration_s % bin_s != 0:
        raise ValueError(f"duration {duration_s} not a multiple of bin {bin_s}")
    rates = movement_rates(total_vph, mix, present)
    n_bins = duration_s // bin_s
    return FlowProfile(np.tile(rates, (n_bins, 1)), bin_s=bin_s)


def three_stage_profile(
    capacity_vph: float,
    fractions=(0.18, 0.5, 0.85),
    stage_s: int = 2400,
    bin_s: int = 300,
    mix=DEFAULT_MIX,
    present=None,
) -> FlowProfile:
    """Low / medium / high demand stages of equal length."""
    if stage_s % bin_s != 0:
        raise ValueError(f"stage {stage_s} not a multiple of bin {bin_s}")
    bins_per_stage = stage_s // bin_s
    blocks = []
    for frac in fractions:
        rates = movement_rates(capacity_vph * frac, mix, present)
        blocks.append(np.tile(rates, (bins_per_stage, 1)))
    return FlowProfile(np.vstack(blocks), bin_s=bin_s)


def staircase_profile(
    totals_vph,
    dwell_s: int = 600,
    bin_s: int = 300,
    mix=DEFAULT_MIX,
    present=None,
    up_and_down: bool = False,
) -> FlowProfile:
    """Hold each total for dwell_s; optionally mirror back down afterwards."""
    if dwell_s % bin_s != 0:
        raise ValueError(f"dwell {dwell_s} not a multiple of bin {bin_s}")
    totals = list(totals_vph)
    if not totals:
        raise ValueError("need at least one staircase level")
    if up_and_down:
        totals = totals + totals[-2::-1]
    bins_per_level = dwell_s // bin_s
    blocks = []
    for total in totals:
        rates = movement_rates(total, mix, present)
        blocks.append(np.tile(rates, (bins_per_level, 1)))
    return FlowProfile(np.vstack(blocks), bin_s=bin_s)


def staircase_levels(
    capacity_vph: float,
    low_frac: float = 0.07,
    high_frac: float = 0.88,
    n_levels: int = 12,
) -> list[float]:
    fracs = np.linspace(low_frac, high_frac, n_levels)
    return [float(capacity_vph * f) for f in fracs]


def generate_flow_patterns(
    base: FlowProfile,
    count: int,
    seed: int,
    noise_sigma: float = 0.15,
    max_shift_bins: int = 1,
    shuffle_segment_s: int | None = None,
) -> list[FlowProfile]:
    """Jittered variants of a base profile for training variety.

    Pattern 0 is always the base unchanged. Later patterns get, in order:
    a random permutation of whole segments (when shuffle_segment_s is set),
    a circular bin shift of up to max_shift_bins, and mean-one multiplicative
    lognormal noise per bin and movement.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    patterns = [base]
    n_bins = base.n_bins
    seg_bins = None
    if shuffle_segment_s is not None:
        if shuffle_segment_s % base.bin_s != 0 or base.duration_s % shuffle_segment_s != 0:
            raise ValueError(
                f"segment {shuffle_segment_s} must evenly divide the profile "
                f"({base.duration_s}s in {base.bin_s}s bins)"
            )
        seg_bins = shuffle_segment_s // base.bin_s

    for _ in range(count - 1):
        rates = base.rates_vph.copy()
        if seg_bins is not None:
            n_segs = n_bins // seg_bins
            order = rng.permutation(n_segs)
            rates = rates.reshape(n_segs, seg_bins, N_MOVEMENTS)[order].reshape(
                n_bins, N_MOVEMENTS
            )
        if max_shift_bins > 0:
            shift = int(rng.integers(-max_shift_bins, max_shift_bins + 1))
            rates = np.roll(rates, shift, axis=0)
        if noise_sigma > 0:
            # lognormal with mean exactly one so the long-run demand is kept
            noise = rng.lognormal(
                mean=-0.5 * noise_sigma**2, sigma=noise_sigma, size=rates.shape
            )
            rates = rates * noise
        patterns.append(FlowProfile(rates, bin_s=base.bin_s))
    return patterns


def build_training_patterns(
    capacity_vph: float,
    count: int,
    seed: int,
    fractions=(0.18, 0.5, 0.85),
    stage_s: int = 2400,
    bin_s: int = 300,
    noise_sigma: float = 0.15,
    max_shift_bins: int = 1,
    mix=DEFAULT_MIX,
    present=None,
) -> list[FlowProfile]:
    """Default training corpus: jittered, stage-shuffled three-stage days."""
    base = three_stage_profile(capacity_vph, fractions, stage_s, bin_s, mix, present)
    return generate_flow_patterns(
        base,
        count,
        seed,
        noise_sigma=noise_sigma,
        max_shift_bins=max_shift_bins,
        shuffle_segment_s=stage_s,
    )
