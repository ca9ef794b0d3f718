"""Flow pattern generator tests."""

import numpy as np
import pytest

from cyclicsignal.flows import (
    DEFAULT_MIX,
    build_training_patterns,
    constant_profile,
    generate_flow_patterns,
    movement_rates,
    staircase_levels,
    staircase_profile,
    three_stage_profile,
)


class TestMovementRates:
    def test_mix_weights_sum_to_total(self):
        rates = movement_rates(3600.0)
        assert rates.sum() == pytest.approx(3600.0)
        # through movements carry double the turn weight
        assert rates[0] == pytest.approx(2 * rates[2])

    def test_absent_movements_renormalize(self):
        present = np.array([1, 1, 1, 1, 1, 1, 0, 0])
        rates = movement_rates(1000.0, present=present)
        assert rates.sum() == pytest.approx(1000.0)
        assert rates[6] == 0.0 and rates[7] == 0.0

    def test_rejects_no_weight(self):
        with pytest.raises(ValueError):
            movement_rates(100.0, present=np.zeros(8))
        with pytest.raises(ValueError):
            movement_rates(100.0, mix=np.ones(5))


class TestProfiles:
    def test_constant_profile(self):
        p = constant_profile(1600.0, duration_s=1200)
        assert p.rates_vph.shape == (4, 8)
        assert np.allclose(p.rates_vph.sum(axis=1), 1600.0)
        with pytest.raises(ValueError):
            constant_profile(1600.0, duration_s=1000)

    def test_three_stage_profile(self):
        p = three_stage_profile(3600.0)
        assert p.duration_s == 7200
        totals = p.rates_vph.sum(axis=1)
        assert totals[0] == pytest.approx(0.18 * 3600)
        assert totals[8] == pytest.approx(0.5 * 3600)
        assert totals[-1] == pytest.approx(0.85 * 3600)

    def test_staircase_up_and_down(self):
        p = staircase_profile([100.0, 200.0, 300.0], dwell_s=600, up_and_down=True)
        totals = p.rates_vph.sum(axis=1)
        # 5 levels of 2 bins each: 100 200 300 200 100
        assert totals.shape == (10,)
        assert np.allclose(totals[::2], [100, 200, 300, 200, 100])

    def test_staircase_levels(self):
        levels = staircase_levels(3600.0)
        assert len(levels) == 12
        assert levels[0] == pytest.approx(0.07 * 3600)
        assert levels[-1] == pytest.approx(0.88 * 3600)
        assert all(b > a for a, b in zip(levels, levels[1:]))


class TestGenerator:
    def base(self):
        return three_stage_profile(3600.0)

    def test_count_one_is_just_base(self):
        out = generate_flow_patterns(self.base(), count=1, seed=0)
        assert len(out) == 1
        assert out[0] is self.base() or np.allclose(
            out[0].rates_vph, self.base().rates_vph
        )

    def test_pattern_zero_always_unmodified(self):
        out = generate_flow_patterns(self.base(), count=5, seed=3)
        assert np.array_equal(out[0].rates_vph, self.base().rates_vph)

    def test_same_seed_identical(self):
        a = generate_flow_patterns(self.base(), count=6, seed=11)
        b = generate_flow_patterns(self.base(), count=6, seed=11)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.rates_vph, pb.rates_vph)

    def test_different_seed_differs(self):
        a = generate_flow_patterns(self.base(), count=3, seed=1)
        b = generate_flow_patterns(self.base(), count=3, seed=2)
        assert not np.allclose(a[1].rates_vph, b[1].rates_vph)

    def test_mean_demand_preserved(self):
        # lognormal jitter has mean one: across many patterns the per-bin
        # average stays near the base
        base = self.base()
        out = generate_flow_patterns(base, count=100, seed=5, max_shift_bins=0)
        stack = np.stack([p.rates_vph for p in out[1:]])
        mean = stack.mean(axis=0)
        assert np.allclose(mean, base.rates_vph, rtol=0.10)

    def test_segment_shuffle_permutes_stages(self):
        base = self.base()
        out = generate_flow_patterns(
            base, count=30, seed=7, noise_sigma=0.0, max_shift_bins=0,
            shuffle_segment_s=2400,
        )
        base_totals = np.round(base.rates_vph.sum(axis=1), 6)
        stages = sorted(set(base_totals))
        permuted = 0
        for p in out[1:]:
            totals = np.round(p.rates_vph.sum(axis=1), 6)
            # same multiset of stage blocks, possibly reordered
            assert sorted(set(totals)) == stages
            assert np.isclose(totals.sum(), base_totals.sum())
            if not np.array_equal(totals, base_totals):
                permuted += 1
        assert permuted > 0

    def test_segment_must_divide_evenly(self):
        with pytest.raises(ValueError):
            generate_flow_patterns(self.base(), count=2, seed=0, shuffle_segment_s=2500)

    def test_count_must_be_positive(self):
        with pytest.raises(ValueError):
            generate_flow_patterns(self.base(), count=0, seed=0)

    def test_shift_only_rolls_bins(self):
        base = self.base()
        out = generate_flow_patterns(
            base, count=20, seed=9, noise_sigma=0.0, max_shift_bins=1,
        )
        for p in out[1:]:
            found = any(
                np.array_equal(p.rates_vph, np.roll(base.rates_vph, s, axis=0))
                for s in (-1, 0, 1)
            )
            assert found

    def test_build_training_patterns(self):
        out = build_training_patterns(3600.0, count=4, seed=100)
        assert len(out) == 4
        assert out[0].duration_s == 7200
        # pattern 0 is the plain three-stage profile
        assert np.array_equal(out[0].rates_vph, three_stage_profile(3600.0).rates_vph)
