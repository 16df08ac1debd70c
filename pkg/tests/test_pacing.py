import numpy as np
import pytest

from vistaflow.errors import InvalidArgument
from vistaflow.pacing import (LoadCurve, StaticCamera, _DummyBox,
                              choose_pacing_target, ladder_cost_fn, run_paced,
                              validate_pacing)
from vistaflow.quiq import (DEFAULT_TIERS, QTable, SimEnv, train_quiq_policy)
from vistaflow.scene_io import make_procedural_scene

STEP_CURVE = "0 1\n15 1\n15.01 4\n30 4\n30.01 1\n45 1\n"


def design_ladder(scale_ms=128.0):
    """Per-tier costs following the tier table's nominal cost model."""
    return np.array([scale_ms * DEFAULT_TIERS.tiers[t][0] ** 2
                     / DEFAULT_TIERS.tiers[t][1] for t in range(8)])


class TestLoadCurve:
    def test_parse_and_interpolate(self):
        curve = LoadCurve.parse("0 1\n10 3\n20 3\n")
        assert curve.multiplier(0.0) == 1.0
        assert curve.multiplier(5.0) == pytest.approx(2.0)
        assert curve.multiplier(15.0) == 3.0
        assert curve.multiplier(99.0) == 3.0  # clamped past the end

    def test_comments_and_blanks_skipped(self):
        curve = LoadCurve.parse("# load curve\n\n0 1\n5 2\n")
        assert curve.multiplier(5.0) == 2.0

    def test_bad_lines_rejected(self):
        with pytest.raises(InvalidArgument):
            LoadCurve.parse("0 1 2\n")
        with pytest.raises(InvalidArgument):
            LoadCurve.parse("0 0\n")  # non-positive multiplier
        with pytest.raises(InvalidArgument):
            LoadCurve.parse("5 1\n0 2\n")  # times go backwards

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "curve.txt"
        path.write_text(STEP_CURVE)
        curve = LoadCurve.load(path)
        assert curve.multiplier(20.0) == 4.0


class TestHarness:
    def test_requires_exactly_one_policy(self):
        curve = LoadCurve.parse(STEP_CURVE)
        grid = make_procedural_scene("sphere", 8)
        with pytest.raises(InvalidArgument):
            run_paced(grid, curve, 5.0, 20.0)
        with pytest.raises(InvalidArgument):
            run_paced(grid, curve, 5.0, 20.0, qtable=QTable(), fixed_tier=7)

    def test_fixed_tier_costs_follow_curve(self):
        # synthetic cost: reported time = base cost x multiplier
        curve = LoadCurve.parse("0 1\n10 1\n10.01 2\n20 2\n")
        costs = design_ladder()
        run = run_paced(_DummyBox(), curve, 20.0, 20.0, fixed_tier=3,
                        cost_fn=ladder_cost_fn(costs))
        times = np.array([r.frame_time for r in run.records])
        stamps = np.array([r.timestamp for r in run.records]) / 1000.0
        first = times[stamps < 9.0]
        second = times[stamps > 11.0]
        assert np.allclose(first, costs[3], rtol=1e-9)
        assert np.allclose(second, 2.0 * costs[3], rtol=1e-9)

    def test_simulated_clock_advances_by_inflated_time(self):
        curve = LoadCurve.parse("0 2\n10 2\n")
        costs = design_ladder()
        run = run_paced(_DummyBox(), curve, 10.0, 20.0, fixed_tier=2,
                        cost_fn=ladder_cost_fn(costs))
        # every reported frame is cost x 2, and timestamps accumulate them
        expect = 2.0 * costs[2]
        assert run.records[1].timestamp == pytest.approx(expect, rel=1e-9)

    def test_in_band_fraction_and_warmup(self):
        curve = LoadCurve.parse("0 1\n10 1\n")
        costs = design_ladder()
        target = 1000.0 / costs[4]  # tier 4 sits exactly on target
        run = run_paced(_DummyBox(), curve, 10.0, target, fixed_tier=4,
                        cost_fn=ladder_cost_fn(costs))
        assert run.in_band_fraction() == 1.0
        off = run_paced(_DummyBox(), curve, 10.0, target * 2.0, fixed_tier=4,
                        cost_fn=ladder_cost_fn(costs))
        assert off.in_band_fraction() == 0.0


class TestTargetChooser:
    def test_candidates_rest_slightly_above_target(self):
        costs = design_ladder()
        cands = choose_pacing_target(costs)
        assert cands
        for target, b, a in cands:
            rest_1x = 1000.0 / costs[b] / target - 1.0
            rest_4x = 1000.0 / (4.0 * costs[a]) / target - 1.0
            assert 0.0 <= rest_1x <= 0.16
            assert 0.0 <= rest_4x <= 0.16

    def test_no_candidates_on_degenerate_ladder(self):
        # a two-level ladder cannot bracket a 4x load swing
        costs = np.array([1.0, 50, 51, 52, 53, 54, 55, 56.0])
        assert choose_pacing_target(costs) == []


class TestControllerHoldsBand:
    def test_every_shipped_load_curve_paced_within_band(self):
        # deterministic end-to-end check on the nominal ladder over the
        # whole shipped load-curve set
        import glob
        import os

        costs = design_ladder()
        target, b, a = choose_pacing_target(costs)[0]
        env = SimEnv(ladder_cost_fn(costs), target_fps=target)
        q = QTable()
        train_quiq_policy(env, q, 30000, np.random.default_rng(0))
        assert int((env.visits > 0).sum()) == 120

        curve_dir = os.path.join(os.path.dirname(__file__), "data",
                                 "load_curves")
        paths = sorted(glob.glob(os.path.join(curve_dir, "*.txt")))
        assert paths
        for path in paths:
            curve = LoadCurve.load(path)
            duration = float(curve.times[-1])
            run = run_paced(_DummyBox(), curve, duration, target, qtable=q,
                            cost_fn=ladder_cost_fn(costs))
            base = run_paced(_DummyBox(), curve, duration, target,
                             fixed_tier=7, cost_fn=ladder_cost_fn(costs))
            assert run.in_band_fraction() >= 0.9, path
            assert run.frame_time_cv() <= 0.5 * base.frame_time_cv(), path

    def test_prevalidation_matches_rollout(self):
        costs = design_ladder()
        curve = LoadCurve.parse(STEP_CURVE)
        target, _b, _a = choose_pacing_target(costs)[0]
        env = SimEnv(ladder_cost_fn(costs), target_fps=target)
        q = QTable()
        train_quiq_policy(env, q, 30000, np.random.default_rng(1))
        ib = validate_pacing(q, costs, target, curve, duration_s=45.0)
        run = run_paced(_DummyBox(), curve, 45.0, target, qtable=q,
                        cost_fn=ladder_cost_fn(costs))
        assert ib == pytest.approx(run.in_band_fraction(), abs=1e-12)

    def test_behavior_independent_of_training_seed(self):
        costs = design_ladder()
        curve = LoadCurve.parse(STEP_CURVE)
        target, _b, _a = choose_pacing_target(costs)[0]
        fractions = []
        for seed in (0, 1, 2):
            env = SimEnv(ladder_cost_fn(costs), target_fps=target)
            q = QTable()
            train_quiq_policy(env, q, 30000, np.random.default_rng(seed))
            fractions.append(validate_pacing(q, costs, target, curve, 45.0))
        # expected sweep backups converge to the same behavior per seed
        assert all(f >= 0.9 for f in fractions)
        assert max(fractions) - min(fractions) < 0.05


class TestStaticCamera:
    def test_pose_never_changes(self):
        from vistaflow.scene_io import look_at_pose

        cam = StaticCamera(look_at_pose((2.0, 0.0, 1.0)))
        assert cam.pose_at(0.0) is cam.pose_at(99.0)
