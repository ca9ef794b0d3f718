"""Rule-based controller tests, pinned against independent oracles."""

import csv
import pathlib

import numpy as np
import pytest

import oracles
from cyclicsignal.errors import InvalidPlanError, SaturationError
from cyclicsignal.sim import Bounds, PhasePlan, validate_plan
from cyclicsignal.teachers import (
    FixedTimeTeacher,
    LinearTeacher,
    LogisticConfig,
    LogisticTeacher,
    ScatsConfig,
    ScatsLikeTeacher,
    WebsterTeacher,
    fit_cycle,
    logistic_cycle,
    phase_flows,
    plan_labels,
    quantize_duration,
    scats_cycle,
    scats_sweep,
    split_cycle,
    teacher_label,
    webster_cycle,
)

DATA = pathlib.Path(__file__).parent / "data"


def uniform_flows(total: float) -> np.ndarray:
    return np.full(8, total / 8.0)


# ---------------------------------------------------------------- quantize


class TestQuantize:
    @pytest.mark.parametrize(
        "raw,want",
        [(14.0, 15), (42.0, 40), (12.5, 15), (10.0, 10), (7.4, 5), (7.5, 10), (0.0, 0)],
    )
    def test_round_half_up(self, raw, want):
        assert quantize_duration(raw) == want

    def test_always_on_grid(self):
        for x in np.linspace(0, 200, 801):
            assert quantize_duration(float(x)) % 5 == 0


# ---------------------------------------------------------------- webster


class TestWebster:
    def test_formula_examples(self, bounds):
        wide = Bounds(min_green=10, max_green=90, min_cycle=20, max_cycle=500)
        assert webster_cycle(10.0, 0.5, wide) == pytest.approx(40.0)
        assert webster_cycle(12.0, 0.0, wide) == pytest.approx(23.0)
        assert webster_cycle(10.0, 0.95, wide) == pytest.approx(400.0)
        # under the default bounds those clamp into [60, 180]
        assert webster_cycle(10.0, 0.5, bounds) == 60.0
        assert webster_cycle(10.0, 0.95, bounds) == 180.0

    def test_saturation_raises(self, bounds):
        with pytest.raises(SaturationError):
            webster_cycle(10.0, 1.0, bounds)
        with pytest.raises(SaturationError):
            webster_cycle(10.0, 1.3, bounds)

    def test_grid_matches_oracle(self, bounds):
        for loss in (8.0, 12.0, 16.0, 20.0):
            for y in np.arange(0.0, 1.0, 0.01):
                got = webster_cycle(loss, float(y), bounds)
                want = oracles.webster_oracle(loss, float(y))
                assert got == pytest.approx(want, abs=1e-12), (loss, y)

    def test_critical_flows_take_pair_max(self, bounds):
        t = WebsterTeacher(bounds)
        flows = np.array([100.0, 50, 80, 10, 60, 90, 120, 40])
        crit = t.critical_flows(flows)
        # phases A=(1,5) D=(3,7) E=(2,6) H=(4,8), 1-based movements
        assert crit.tolist() == [100.0, 120.0, 90.0, 40.0]

    def test_saturated_flows_fall_back_to_max_cycle(self, bounds):
        t = WebsterTeacher(bounds)
        plan = t.target_plan(np.full(8, 400.0))  # Y = 1600/1440 > 1
        validate_plan(plan, bounds)
        # largest admissible realized cycle on the 5 s grid
        assert plan.cycle_time == 176

    def test_plan_valid_across_loads(self, bounds):
        t = WebsterTeacher(bounds)
        for total in range(0, 4001, 100):
            plan = t.target_plan(uniform_flows(total))
            validate_plan(plan, bounds)


# ---------------------------------------------------------------- linear


class TestLinear:
    def test_volume_examples(self, bounds):
        t = LinearTeacher(bounds)
        assert t.durations_for(np.array([100.0, 100, 100, 100])) == (35, 35, 35, 35)
        assert t.durations_for(np.zeros(4)) == (10, 10, 10, 10)
        assert t.durations_for(np.array([200.0, 40, 120, 40])) == (70, 15, 40, 15)

    def test_huge_volume_clamps_to_max_green(self, bounds):
        t = LinearTeacher(bounds)
        durs = t.durations_for(np.array([1000.0, 0, 0, 0]))
        assert durs[0] == 90
        assert durs[1:] == (10, 10, 10)

    def test_target_plan_uses_window_volumes(self, bounds):
        # 1200 veh/h on each movement of phase A over a 300 s window is
        # 100 vehicles, so phase A wants 0.35 * 200 = 70 s
        t = LinearTeacher(bounds)
        flows = np.zeros(8)
        flows[0] = flows[4] = 1200.0
        plan = t.target_plan(flows)
        validate_plan(plan, bounds)
        assert plan.durations[0] == 70
        assert plan.durations[1:] == (10, 10, 10)

    def test_monotone_in_flow(self, bounds):
        t = LinearTeacher(bounds)
        prev = 0
        for total in range(0, 4001, 200):
            plan = t.target_plan(uniform_flows(total))
            assert plan.cycle_time >= prev
            prev = plan.cycle_time


# ---------------------------------------------------------------- logistic


class TestLogistic:
    def test_midpoint_gives_halfway_cycle(self, bounds):
        cfg = LogisticConfig(midpoint_vph=2160.0, width_vph=540.0)
        assert logistic_cycle(2160.0, cfg, bounds) == 120

    def test_zero_flow_gives_min(self, bounds):
        cfg = LogisticConfig(midpoint_vph=2160.0, width_vph=540.0)
        assert logistic_cycle(0.0, cfg, bounds) == 60

    def test_one_width_above_midpoint(self, bounds):
        cfg = LogisticConfig(midpoint_vph=1000.0, width_vph=200.0)
        # sigmoid(1) = 0.7311, 60 + 120 * 0.7311 = 147.7 -> 150
        assert logistic_cycle(1200.0, cfg, bounds) == 150

    def test_curve_matches_oracle(self, bounds):
        cfg = LogisticConfig(midpoint_vph=2160.0, width_vph=540.0)
        for flow in range(0, 4001, 50):
            got = logistic_cycle(float(flow), cfg, bounds)
            want = oracles.round_to_grid(
                oracles.logistic_oracle(float(flow), 2160.0, 540.0, 60.0, 180.0)
            )
            want = int(min(max(want, 60), 180))
            assert got == want, flow

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            LogisticConfig(midpoint_vph=1000.0, width_vph=0.0)
        with pytest.raises(ValueError):
            LogisticConfig(midpoint_vph=1000.0, width_vph=100.0, cmin_s=100.0, cmax_s=90.0)

    def test_teacher_plan_valid(self, bounds):
        t = LogisticTeacher(bounds)
        for total in range(0, 4001, 250):
            validate_plan(t.target_plan(uniform_flows(total)), bounds)


# ---------------------------------------------------------------- scats


class TestScats:
    def test_stairs_and_limits(self):
        cfg = ScatsConfig()
        assert scats_cycle(0.0, cfg) == 60
        assert scats_cycle(899.0, cfg) == 60
        assert scats_cycle(900.0, cfg) == 70
        assert scats_cycle(1619.0, cfg) == 70
        assert scats_cycle(1620.0, cfg) == 80
        assert scats_cycle(2159.0, cfg) == 80
        assert scats_cycle(3060.0, cfg) == 150
        assert scats_cycle(3600.0, cfg) == 180
        assert scats_cycle(9999.0, cfg) == 180

    def test_steep_stage_is_linear(self):
        cfg = ScatsConfig()
        mid = (2160.0 + 3060.0) / 2.0
        assert scats_cycle(mid, cfg) == quantize_duration((80 + 150) / 2.0)

    def test_sweep_matches_live_oracle(self):
        cfg = ScatsConfig()
        flows = np.arange(0.0, 2001.0, 10.0)
        got = scats_sweep(cfg, flows)
        for flow, cycle in got:
            assert cycle == oracles.scats_curve_oracle(flow), flow

    def test_sweep_matches_frozen_table(self, bounds):
        rows = list(csv.DictReader((DATA / "scats_oracle.csv").open()))
        assert len(rows) == 201
        teacher = ScatsLikeTeacher(bounds)
        for row in rows:
            flow = float(row["flow_vph"])
            assert scats_cycle(flow, teacher.cfg) == int(row["cycle_s"]), flow
            plan = teacher.target_plan(uniform_flows(flow))
            want = (
                int(row["green_a"]),
                int(row["green_d"]),
                int(row["green_e"]),
                int(row["green_h"]),
            )
            assert plan.durations == want, flow

    def test_plan_matches_split_oracle(self, bounds):
        teacher = ScatsLikeTeacher(bounds)
        for flow in range(0, 4001, 37):
            plan = teacher.target_plan(uniform_flows(float(flow)))
            _, want = oracles.scats_plan_oracle(float(flow))
            assert plan.durations == want, flow

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            ScatsConfig(min_ct=62)
        with pytest.raises(ValueError):
            ScatsConfig(alt_min_1=55)  # not above min_ct
        with pytest.raises(ValueError):
            ScatsConfig(breakpoints_vph=(900.0, 800.0, 2160.0, 3060.0))
        with pytest.raises(ValueError):
            ScatsConfig(saturation_flow_vph=3000.0)


# ---------------------------------------------------------------- splitting


class TestSplitAndFit:
    def test_equal_weights_known_split(self, bounds):
        # 100 s budget, equal demand: 20 units, 5 per phase
        plan = split_cycle(116.0, np.ones(4), bounds, lost_time=4)
        assert plan.durations == (25, 25, 25, 25)

    def test_leftover_units_go_to_first_phase(self, bounds):
        plan = split_cycle(121.0, np.ones(4), bounds, lost_time=4)
        # budget quantizes to 105: 21 units, 5 each plus one spare to A
        assert plan.durations == (30, 25, 25, 25)

    def test_split_respects_weights(self, bounds):
        plan = split_cycle(136.0, np.array([3.0, 1.0, 1.0, 1.0]), bounds, lost_time=4)
        assert plan.durations[0] > plan.durations[1]
        assert plan.cycle_time == 136

    def test_split_always_valid(self, bounds):
        rng = np.random.default_rng(0)
        for _ in range(300):
            cycle = float(rng.uniform(55, 190))
            weights = rng.uniform(0, 5, size=4)
            plan = split_cycle(cycle, weights, bounds, lost_time=4)
            validate_plan(plan, bounds)

    def test_zero_weights_fall_back_to_equal(self, bounds):
        plan = split_cycle(116.0, np.zeros(4), bounds, lost_time=4)
        assert plan.durations == (25, 25, 25, 25)

    def test_fit_passes_valid_plans_through(self, bounds):
        assert fit_cycle((30, 25, 35, 20), bounds).durations == (30, 25, 35, 20)

    def test_fit_rescales_oversized(self, bounds):
        plan = fit_cycle((90, 90, 90, 90), bounds)
        validate_plan(plan, bounds)
        assert len(set(plan.durations)) == 1  # symmetry preserved

    def test_fit_rescales_undersized(self, bounds):
        plan = fit_cycle((10, 10, 10, 10), bounds)
        validate_plan(plan, bounds)

    def test_fit_fuzz_always_valid(self, bounds):
        rng = np.random.default_rng(5)
        for _ in range(300):
            durs = tuple(int(5 * rng.integers(2, 19)) for _ in range(4))
            plan = fit_cycle(durs, bounds)
            validate_plan(plan, bounds)


# ---------------------------------------------------------------- labels


class TestLabels:
    def test_examples(self):
        assert teacher_label(35, 30) == 0
        assert teacher_label(20, 30) == 1
        assert teacher_label(32, 30) == 2

    def test_exhaustive_grid_matches_oracle(self):
        for e in range(10, 95, 5):
            for t in range(10, 95, 5):
                assert teacher_label(e, t) == oracles.label_oracle(e, t), (e, t)

    def test_plan_labels_vectorizes(self):
        expert = PhasePlan((35, 20, 32, 30))
        prev = PhasePlan((30, 30, 30, 30))
        # 32 vs 30 is within one step even though both are on the grid
        assert plan_labels(expert, prev).tolist() == [0, 1, 2, 2]

    def test_same_plan_all_keep(self):
        p = PhasePlan((25, 30, 35, 40))
        assert plan_labels(p, p).tolist() == [2, 2, 2, 2]


# ---------------------------------------------------------------- misc


class TestPhaseFlowsAndFixed:
    def test_phase_flows_pairs(self):
        f = np.arange(1.0, 9.0)  # movements 1..8
        assert phase_flows(f).tolist() == [1 + 5, 3 + 7, 2 + 6, 4 + 8]

    def test_phase_flows_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            phase_flows(np.zeros(7))

    def test_fixed_time_ignores_flows(self, bounds):
        t = FixedTimeTeacher(bounds)
        a = t.target_plan(np.zeros(8))
        b = t.target_plan(np.full(8, 500.0))
        assert a.durations == b.durations == (30, 30, 30, 30)
