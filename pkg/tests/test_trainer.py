import math

import numpy as np
import pytest

from vistaflow.errors import (InvalidArgument, NonFiniteGradient,
                              ResolutionLimit)
from vistaflow.scene_io import (CameraIntrinsics, Dataset, ImageBuffer,
                                look_at_pose)
from vistaflow.trainer import (RayBatchSampler, TrainConfig, evaluate_views_psnr,
                               sample_ray_batch, sgd_step, train, tv_term)
from vistaflow.voxel_model import VoxelGrid
from vistaflow.volume_renderer import SparseGradients

from conftest import random_grid


def tiny_dataset(rng, n_frames=2, size=4):
    intr = CameraIntrinsics.from_fov_x(size, size, 0.69)
    frames = []
    for i in range(n_frames):
        angle = 2 * math.pi * i / max(1, n_frames)
        pose = look_at_pose((1.5 * math.cos(angle), 1.5 * math.sin(angle), 0.5))
        img = ImageBuffer(width=size, height=size,
                          rgb=rng.random((size, size, 3)))
        frames.append((pose, img))
    return Dataset(intrinsics=intr, frames=frames, split="train")


class TestSampleRayBatch:
    def test_exhaustive_single_frame(self, rng):
        ds = tiny_dataset(rng, n_frames=1, size=2)
        batch = sample_ray_batch(ds, 4, np.random.default_rng(0))
        assert len(batch) == 4
        # each of the 4 pixels drawn exactly once
        targets = sorted(map(tuple, np.round(batch.targets, 6)))
        want = sorted(map(tuple, np.round(ds.frames[0][1].rgb.reshape(-1, 3), 6)))
        assert targets == want

    def test_deterministic_given_seed(self, rng):
        ds = tiny_dataset(rng)
        a = sample_ray_batch(ds, 8, np.random.default_rng(7))
        b = sample_ray_batch(ds, 8, np.random.default_rng(7))
        assert np.array_equal(a.origins, b.origins)
        assert np.array_equal(a.targets, b.targets)

    def test_uniform_over_pixels(self, rng):
        # 1e5 draws: every pixel's frequency within 3 sigma of binomial
        ds = tiny_dataset(rng, n_frames=1, size=4)
        sampler = RayBatchSampler(ds)
        gen = np.random.default_rng(11)
        counts = np.zeros(16)
        batch, draws = 8, 12500
        for _ in range(draws):
            _o, _d, t = sampler.sample(batch, gen)
            flat = ds.frames[0][1].rgb.reshape(-1, 3)
            for row in t:
                idx = int(np.argmin(np.abs(flat - row).sum(axis=1)))
                counts[idx] += 1
        n = batch * draws
        p = 1.0 / 16
        sigma = math.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) <= 3 * sigma)

    def test_batch_larger_than_dataset_rejected(self, rng):
        ds = tiny_dataset(rng, n_frames=1, size=2)
        with pytest.raises(InvalidArgument):
            sample_ray_batch(ds, 5, np.random.default_rng(0))

    def test_iterates_as_ray_target_pairs(self, rng):
        ds = tiny_dataset(rng)
        batch = sample_ray_batch(ds, 3, np.random.default_rng(1))
        ray, target = batch[0]
        assert ray.direction.shape == (3,)
        assert np.linalg.norm(ray.direction) == pytest.approx(1.0, abs=1e-9)
        assert target.shape == (3,)


class TestTvTerm:
    def test_constant_grid_is_zero(self):
        g = VoxelGrid((4, 4, 4), (0, 0, 0), (1, 1, 1))
        g.density[:] = 2.0
        g.sh[:] = 0.7
        tv = tv_term(g, np.arange(64))
        assert tv.value_density == pytest.approx(0.0, abs=1e-12)
        assert tv.value_sh == pytest.approx(0.0, abs=1e-12)
        assert np.all(tv.grads.density == 0.0)

    def test_two_voxel_difference(self):
        # +x neighbors with densities 0 and 2: contribution (2-0)^2 / |subset|
        g = VoxelGrid((2, 2, 2), (0, 0, 0), (1, 1, 1))
        g.occupancy[:] = False
        g.occupancy[0, 0, 0] = True
        g.occupancy[1, 0, 0] = True
        g.density[1, 0, 0] = 2.0
        subset = np.array([0, 4])  # flat ids of (0,0,0) and (1,0,0)
        tv = tv_term(g, subset)
        assert tv.value_density == pytest.approx(4.0 / 2, abs=1e-12)

    def test_gradients_match_finite_differences(self, rng):
        g = random_grid(rng, dims=(4, 4, 4), density_range=(0.0, 3.0),
                        occupancy_p=0.9)
        occ = np.nonzero(g.occupancy.reshape(-1))[0]
        subset = rng.choice(occ, size=min(20, occ.size), replace=False)
        tv = tv_term(g, subset)
        dense = tv.grads.to_dense(g.dims)
        h = 1e-5

        def value():
            t = tv_term(g, subset)
            return t.value_density + t.value_sh

        flat_d = g.density.reshape(-1)
        for vid in tv.grads.indices[:15]:
            orig = flat_d[vid]
            flat_d[vid] = orig + h
            fp = value()
            flat_d[vid] = orig - h
            fm = value()
            flat_d[vid] = orig
            fd = (fp - fm) / (2 * h)
            an = dense.density.reshape(-1)[vid]
            assert abs(fd - an) <= 1e-4 * max(1.0, abs(fd))
        flat_s = g.sh.reshape(-1, 27)
        for vid in tv.grads.indices[:5]:
            for ch in (0, 13, 26):
                orig = flat_s[vid, ch]
                flat_s[vid, ch] = orig + h
                fp = value()
                flat_s[vid, ch] = orig - h
                fm = value()
                flat_s[vid, ch] = orig
                fd = (fp - fm) / (2 * h)
                an = dense.sh.reshape(-1, 27)[vid, ch]
                assert abs(fd - an) <= 1e-4 * max(1.0, abs(fd))

    def test_empty_subset_rejected(self, rng):
        g = random_grid(rng, dims=(4, 4, 4))
        with pytest.raises(InvalidArgument):
            tv_term(g, np.array([], dtype=np.int64))

    def test_unoccupied_subset_rejected(self, rng):
        g = random_grid(rng, dims=(4, 4, 4))
        g.occupancy[0, 0, 0] = False
        with pytest.raises(InvalidArgument):
            tv_term(g, np.array([0]))

    def test_infinite_tv_pulls_to_equality(self):
        # gradient flow on TV alone drives two neighbors together
        g = VoxelGrid((2, 2, 2), (0, 0, 0), (1, 1, 1))
        g.occupancy[:] = False
        g.occupancy[0, 0, 0] = True
        g.occupancy[1, 0, 0] = True
        g.density[0, 0, 0] = 0.0
        g.density[1, 0, 0] = 2.0
        subset = np.array([0, 4])
        for _ in range(200):
            tv = tv_term(g, subset)
            sgd_step(g, tv.grads, lr_sigma=0.1, lr_sh=0.1)
        assert abs(g.density[0, 0, 0] - g.density[1, 0, 0]) < 1e-6


class TestSgdStep:
    def test_zero_gradients_fixed_point(self, rng):
        g = random_grid(rng, dims=(4, 4, 4))
        before_d = g.density.copy()
        before_s = g.sh.copy()
        zeros = SparseGradients(indices=np.zeros(0, dtype=np.int64),
                                density=np.zeros(0), sh=np.zeros((0, 27)))
        sgd_step(g, zeros, 1.0, 1.0)
        assert np.array_equal(g.density, before_d)
        assert np.array_equal(g.sh, before_s)

    def test_single_parameter_update(self):
        g = VoxelGrid((2, 2, 2), (0, 0, 0), (1, 1, 1))
        grads = SparseGradients(indices=np.array([3]),
                                density=np.array([1.0]),
                                sh=np.zeros((1, 27)))
        sgd_step(g, grads, lr_sigma=0.1, lr_sh=0.0)
        assert g.density.reshape(-1)[3] == pytest.approx(-0.1, abs=1e-12)
        assert np.count_nonzero(g.density) == 1

    def test_two_steps_equal_one_summed_on_linear_objective(self, rng):
        # loss linear in parameters: gradients constant, so steps add
        g1 = random_grid(rng, dims=(2, 2, 2))
        g2 = g1.copy()
        ga = SparseGradients(indices=np.arange(8),
                             density=rng.normal(size=8),
                             sh=rng.normal(size=(8, 27)))
        gb = SparseGradients(indices=np.arange(8),
                             density=rng.normal(size=8),
                             sh=rng.normal(size=(8, 27)))
        sgd_step(g1, ga, 0.3, 0.2)
        sgd_step(g1, gb, 0.3, 0.2)
        summed = SparseGradients(indices=np.arange(8),
                                 density=ga.density + gb.density,
                                 sh=ga.sh + gb.sh)
        sgd_step(g2, summed, 0.3, 0.2)
        assert np.allclose(g1.density, g2.density, atol=1e-12)
        assert np.allclose(g1.sh, g2.sh, atol=1e-12)

    def test_non_finite_rejected(self, rng):
        g = random_grid(rng, dims=(2, 2, 2))
        grads = SparseGradients(indices=np.array([0]),
                                density=np.array([np.nan]),
                                sh=np.zeros((1, 27)))
        with pytest.raises(NonFiniteGradient):
            sgd_step(g, grads, 0.1, 0.1)


class TestTrainConfig:
    def test_full_scale_schedule_accepted(self):
        cfg = TrainConfig(start_resolution=256, subdivisions=1, iterations=0)
        assert cfg.resolution_schedule() == [256, 512]

    def test_schedule_beyond_limit_rejected(self):
        with pytest.raises(ResolutionLimit):
            TrainConfig(start_resolution=512, subdivisions=1)

    def test_per_stage_iterations(self):
        cfg = TrainConfig(start_resolution=16, subdivisions=2,
                          iterations=[10, 5, 2])
        assert cfg.stage_iterations() == [10, 5, 2]
        with pytest.raises(InvalidArgument):
            TrainConfig(start_resolution=16, subdivisions=1,
                        iterations=[1, 2, 3]).stage_iterations()


class TestTrain:
    def test_zero_iterations_returns_initial_grid(self, rng):
        ds = tiny_dataset(rng)
        cfg = TrainConfig(start_resolution=16, subdivisions=1, iterations=0,
                          bbox_min=(-0.5,) * 3, bbox_max=(0.5,) * 3)
        grid, report = train(ds, cfg)
        assert grid.dims == (16, 16, 16)
        assert np.all(grid.density == cfg.init_density)
        assert report.schedule == [16, 32]
        assert all(not s.loss for s in report.stages)

    def test_short_run_reduces_loss_and_logs(self, rng):
        ds = tiny_dataset(rng, n_frames=3, size=8)
        cfg = TrainConfig(start_resolution=8, subdivisions=0, iterations=40,
                          batch_size=32, bbox_min=(-0.5,) * 3,
                          bbox_max=(0.5,) * 3, seed=3, prune_enabled=False)
        grid, report = train(ds, cfg)
        stage = report.stages[0]
        assert len(stage.loss) == 40
        assert len(stage.psnr) == 40
        assert all(math.isfinite(v) for v in stage.loss)
        assert stage.loss[-1] < stage.loss[0]
        lines = report.log_lines()
        assert any(line.startswith("iter 0 ") for line in lines)
        assert report.text_table()

    def test_deterministic_given_seed(self, rng):
        ds = tiny_dataset(rng, n_frames=2, size=6)
        cfg = TrainConfig(start_resolution=8, subdivisions=0, iterations=10,
                          batch_size=16, bbox_min=(-0.5,) * 3,
                          bbox_max=(0.5,) * 3, seed=5, prune_enabled=False)
        g1, _ = train(ds, cfg)
        g2, _ = train(ds, cfg)
        assert np.array_equal(g1.density, g2.density)
        assert np.array_equal(g1.sh, g2.sh)
