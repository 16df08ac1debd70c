"""QuiQ: the Q-learning quality controller.

Pipeline: benchmark the machine over a fixed camera path while cycling
quality tiers, summarize the telemetry into a profile, pull the closest
prerecorded telemetry via k-NN, fit a ridge model predicting log frame time
from render settings, then train a tabular Q policy against that model as a
simulated environment. At run time the controller is a table lookup mapping
(framerate error, camera speed, tier) to a tier change.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (CorruptModel, EmptyLibrary, InvalidArgument,
                     SingularSystem)
from .profiles import (N_TIERS, BenchmarkProfile, ProfileEntry,
                       TelemetryRecord, extract_profile, knn_match)
from .scene_io import CameraIntrinsics, OrbitTrajectory
from .voxel_model import VoxelGrid
from .volume_renderer import RenderSettings, render_image

N_FPS_BUCKETS = 5
N_SPEED_BUCKETS = 3
N_STATES = N_FPS_BUCKETS * N_SPEED_BUCKETS * N_TIERS  # 120
N_ACTIONS = 3  # tier_down, stay, tier_up
SIM_STEPS_PER_SECOND = 2000  # nominal control rate for budgeted training


@dataclass(frozen=True)
class TierTable:
    """The 8-entry quality ladder mapping tier -> (rho, delta_scale, gamma).

    Tier 0 is the cheapest, tier 7 the highest quality; rho is non-decreasing
    and delta_scale/gamma non-increasing across the ladder.
    """

    # Tiers 1..6 step measured cost by ~sqrt(2) each (values calibrated on
    # the reference scene), so a 4x background-load swing spans about four
    # gaps and lands near another mid-ladder tier; the larger jumps to the
    # fixed endpoints absorb the rest of the ladder span.
    tiers: tuple = (
        (0.25, 4.0, 5e-2),
        (0.43, 2.25, 2e-2),
        (0.50, 1.98, 1e-2),
        (0.56, 1.70, 5e-3),
        (0.62, 1.48, 2e-3),
        (0.69, 1.31, 1e-3),
        (0.78, 1.19, 8e-4),
        (1.00, 1.0, 5e-4),
    )

    def __post_init__(self):
        if len(self.tiers) != N_TIERS:
            raise InvalidArgument("tier table must have 8 entries")
        rho = [t[0] for t in self.tiers]
        ds = [t[1] for t in self.tiers]
        gm = [t[2] for t in self.tiers]
        if (sorted(rho) != rho or sorted(ds, reverse=True) != ds
                or sorted(gm, reverse=True) != gm):
            raise InvalidArgument(
                "tiers must be monotone: rho up, delta_scale and gamma down")

    def settings(self, tier: int) -> RenderSettings:
        tier = int(np.clip(tier, 0, N_TIERS - 1))
        rho, ds, gm = self.tiers[tier]
        return RenderSettings(delta_scale=ds, gamma=gm, rho=rho, tier=tier)


DEFAULT_TIERS = TierTable()


# -- frame-time model --------------------------------------------------------

@dataclass
class RidgeModel:
    """Linear predictor of log frame time over normalized features."""

    weights: np.ndarray
    intercept: float
    lam: float
    feature_mean: np.ndarray
    feature_scale: np.ndarray

    def predict(self, features) -> np.ndarray:
        x = (np.atleast_2d(np.asarray(features, dtype=np.float64))
             - self.feature_mean) / self.feature_scale
        return x @ self.weights + self.intercept


def fit_ridge(features, targets, lam: float) -> RidgeModel:
    """Closed-form ridge fit, intercept unpenalized, features normalized.

    Solves (X^T X + lam I) w = X^T (y - mean(y)) on standardized columns.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise InvalidArgument("features must be (n, d) matching targets")
    n, d = x.shape
    if n < d:
        raise InvalidArgument(f"need at least d={d} samples, got {n}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise InvalidArgument("features and targets must be finite")
    if lam < 0:
        raise InvalidArgument("lambda must be >= 0")

    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0.0] = 1.0
    xn = (x - mean) / scale
    yc = y - y.mean()
    a = xn.T @ xn + lam * np.eye(d)
    b = xn.T @ yc
    try:
        w = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as e:
        raise SingularSystem(f"ridge system is singular (try lam > 0): {e}")
    if not np.isfinite(w).all():
        raise SingularSystem("ridge solution is not finite (try lam > 0)")
    if lam == 0.0:
        # guard near-singular systems that solve() does not flag
        resid = float(np.linalg.norm(a @ w - b))
        if resid > 1e-6 * max(1.0, float(np.linalg.norm(b))):
            raise SingularSystem("ridge system is ill-conditioned (try lam > 0)")
    return RidgeModel(weights=w, intercept=float(y.mean()), lam=lam,
                      feature_mean=mean, feature_scale=scale)


def settings_features(settings: RenderSettings, camera_speed: float,
                      pixel_count: float, occupancy_hint: float) -> np.ndarray:
    """Cost-model features for one frame's render configuration."""
    return np.array([
        float(pixel_count),
        1.0 / settings.delta_scale,
        -math.log(settings.gamma),
        float(camera_speed),
        float(occupancy_hint),
        settings.tier / 7.0,
    ])


def telemetry_features(records):
    """Feature matrix and log-frame-time targets from telemetry records."""
    x = np.stack([settings_features(r.settings, r.camera_speed,
                                    r.pixel_count, r.occupancy_hint)
                  for r in records])
    y = np.log([r.frame_time for r in records])
    return x, y


def predict_frame_time(model: RidgeModel, settings: RenderSettings,
                       camera_speed: float, pixel_count: float,
                       occupancy_hint: float) -> float:
    """Predicted frame time in ms (framerate is 1000 / prediction)."""
    f = settings_features(settings, camera_speed, pixel_count, occupancy_hint)
    return float(np.exp(model.predict(f)[0]))


def reward(predicted_fps: float, tier: int, target_fps: float,
           beta: float = 4.0) -> float:
    """Quality reward minus a shortfall penalty.

    Maximal for the highest tier that still meets the target framerate.
    """
    if target_fps <= 0:
        raise InvalidArgument("target_fps must be positive")
    shortfall = max(0.0, (target_fps - predicted_fps) / target_fps)
    return tier / 7.0 - beta * shortfall


# -- tabular policy ----------------------------------------------------------

def fps_error_bucket(err: float) -> int:
    """Relative framerate error -> bucket 0..4 (edges at -20%, -5%, +5%, +20%)."""
    if err < -0.20:
        return 0
    if err < -0.05:
        return 1
    if err < 0.05:
        return 2
    if err < 0.20:
        return 3
    return 4


def speed_bucket(speed: float) -> int:
    """Camera speed -> bucket: static < 0.01, slow < 1.0, fast otherwise."""
    if speed < 0.01:
        return 0
    if speed < 1.0:
        return 1
    return 2


def state_index(err_bucket: int, spd_bucket: int, tier: int) -> int:
    return (err_bucket * N_SPEED_BUCKETS + spd_bucket) * N_TIERS + tier


@dataclass
class QTable:
    """Tabular action values over 120 states x 3 actions."""

    values: np.ndarray = field(
        default_factory=lambda: np.zeros((N_STATES, N_ACTIONS)))
    alpha: float = 0.2
    # a fairly myopic horizon: long-horizon value estimates mix states the
    # bucketed observation cannot tell apart, which rewards tier detours the
    # real system never profits from
    discount: float = 0.4
    eps_start: float = 1.0
    eps_end: float = 0.05

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(
            N_STATES, N_ACTIONS)

    def greedy(self, state: int) -> int:
        return int(np.argmax(self.values[state]))


def q_update(qtable: QTable, s: int, a: int, r: float, s_next: int,
             alpha: float, discount: float) -> QTable:
    """One-step Q-learning update (in place)."""
    best_next = float(np.max(qtable.values[s_next]))
    qtable.values[s, a] += alpha * (r + discount * best_next
                                    - qtable.values[s, a])
    return qtable


def train_tabular_q(env, qtable: QTable, steps: int,
                    rng: np.random.Generator, episode_len: int = 64,
                    alpha: float | None = None,
                    discount: float | None = None) -> QTable:
    """Epsilon-greedy Q-learning with linearly annealed exploration."""
    alpha = qtable.alpha if alpha is None else alpha
    discount = qtable.discount if discount is None else discount
    s = env.reset(rng)
    for i in range(steps):
        frac = i / max(1, steps - 1)
        eps = qtable.eps_start + (qtable.eps_end - qtable.eps_start) * frac
        if rng.random() < eps:
            a = int(rng.integers(env.n_actions))
        else:
            a = int(np.argmax(qtable.values[s]))
        s_next, r = env.step(a, rng)
        q_update(qtable, s, a, r, s_next, alpha, discount)
        s = s_next
        if episode_len and (i + 1) % episode_len == 0:
            s = env.reset(rng)
    return qtable


def train_quiq_policy(env, qtable: QTable, steps: int,
                      rng: np.random.Generator, episode_len: int = 24,
                      discount: float | None = None) -> QTable:
    """Exploring-start Q-learning tuned for the pacing environment.

    Alternates full sweeps over every (state, action) pair with epsilon-greedy
    episodes. A sweep update starts the environment at each within-bucket
    error quantile and averages the one-step targets (running mean over the
    quantiles), which on the deterministic environment makes the sweep an
    expected backup: the learned table is independent of the exploration
    seed once converged.
    """
    discount = qtable.discount if discount is None else discount
    pairs = [(s, a) for s in range(env.n_states) for a in range(env.n_actions)]
    done = 0
    while done < steps:
        rng.shuffle(pairs)
        for s, a in pairs:
            for i, err in enumerate(env.start_errors(s)):
                env.force(s, err)
                s_next, r = env.step(a, rng)
                q_update(qtable, s, a, r, s_next, 1.0 / (i + 1), discount)
                done += 1
        frac = min(1.0, done / max(1, steps - 1))
        eps = qtable.eps_start + (qtable.eps_end - qtable.eps_start) * frac
        s = env.reset(rng)
        for _ in range(episode_len):
            if rng.random() < eps:
                a = int(rng.integers(env.n_actions))
            else:
                a = int(np.argmax(qtable.values[s]))
            s_next, r = env.step(a, rng)
            q_update(qtable, s, a, r, s_next, 0.05, discount)
            s = s_next
            done += 1
    return qtable




# exploring-start error ranges per bucket; the outer buckets are unbounded
# in reality, so they are sampled wide (log-uniform on the fast side)
_ERR_BUCKET_RANGES = ((-0.9, -0.2), (-0.2, -0.05), (-0.05, 0.05),
                      (0.05, 0.2), (0.2, 8.0))
_SPEED_BUCKET_REPR = (0.0, 0.3, 2.5)


class SimEnv:
    """Pacing environment simulated against a frame-cost model.

    cost_fn(settings, camera_speed) -> predicted ms at no background load.
    The underlying state is a continuous relative framerate error; changing
    tier scales the framerate by the cost ratio the model predicts, while the
    implied background load (whatever produced the current error) stays put.
    The observation quantizes the error into the controller's buckets.
    Transitions are deterministic by default (noise=0); reset() performs
    exploring starts cycling through all 120 observable states.
    """

    n_states = N_STATES
    n_actions = N_ACTIONS

    def __init__(self, cost_fn, target_fps: float, noise: float = 0.0):
        self.cost_fn = cost_fn
        self.target_fps = float(target_fps)
        self.noise = noise
        self.tier = N_TIERS - 1
        self.speed_bucket = 0
        self.err = 0.0
        self.visits = np.zeros(N_STATES, dtype=np.int64)
        self._cycle = np.arange(N_STATES)
        self._cycle_pos = 0

    def _cost(self, tier: int) -> float:
        speed = _SPEED_BUCKET_REPR[self.speed_bucket]
        return float(self.cost_fn(DEFAULT_TIERS.settings(tier), speed))

    def _observe(self) -> tuple[int, float]:
        fps = self.target_fps * (1.0 + self.err)
        s = state_index(fps_error_bucket(self.err), self.speed_bucket,
                        self.tier)
        self.visits[s] += 1
        return s, fps

    def force(self, s: int, err: float) -> int:
        """Place the environment exactly at observable state s with this error."""
        self.tier = s % N_TIERS
        self.speed_bucket = (s // N_TIERS) % N_SPEED_BUCKETS
        self.err = float(err)
        out, _ = self._observe()
        return out

    def start_errors(self, s: int):
        """Representative in-bucket errors for exploring starts at state s.

        Prefers the errors a background load in the deployment range (the
        1x-4x lattice) would actually induce at this tier, so backups average
        over deployment-consistent situations; falls back to a generic grid
        for (bucket, tier) combinations no deployment load can reach.
        """
        tier = s % N_TIERS
        self.speed_bucket = (s // N_TIERS) % N_SPEED_BUCKETS
        eb = s // (N_TIERS * N_SPEED_BUCKETS)
        lo, hi = _ERR_BUCKET_RANGES[eb]
        fps_unloaded = 1000.0 / self._cost(tier)
        reachable = []
        for k in range(5):  # loads 1 .. 4 on the sqrt-2 lattice
            err = fps_unloaded / (2.0 ** (k / 2.0) * self.target_fps) - 1.0
            if lo <= err < hi or (eb == N_FPS_BUCKETS - 1 and err >= hi):
                reachable.append(err)
        if reachable:
            return tuple(reachable)
        if hi > 1.0:  # the too-fast tail spans decades: log-spaced points
            return tuple(np.exp(np.linspace(np.log(lo), np.log(hi), 4)))
        return tuple(np.linspace(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), 3))

    def reset(self, rng: np.random.Generator) -> int:
        if self._cycle_pos == 0:
            rng.shuffle(self._cycle)
        s = int(self._cycle[self._cycle_pos])
        self._cycle_pos = (self._cycle_pos + 1) % N_STATES
        errs = self.start_errors(s)
        return self.force(s, errs[int(rng.integers(len(errs)))])

    def step(self, action: int, rng: np.random.Generator):
        prev_cost = self._cost(self.tier)
        self.tier = int(np.clip(self.tier + (action - 1), 0, N_TIERS - 1))
        ratio = prev_cost / self._cost(self.tier)
        self.err = (1.0 + self.err) * ratio - 1.0
        if self.noise > 0:
            self.err = (1.0 + self.err) * math.exp(
                self.noise * rng.standard_normal()) - 1.0
        s, fps = self._observe()
        return s, reward(fps, self.tier, self.target_fps)


def ridge_cost_fn(model: RidgeModel, base_pixels: int, occupancy_hint: float,
                  tier_medians=None):
    """Wrap a ridge model as a cost function over tier settings.

    The six-feature model fits the global cost trend but leaves systematic
    per-tier residuals (eight tier levels exceed its degrees of freedom), so
    when the benchmark's per-tier median frame times are available they
    anchor each tier's base cost and the ridge contributes the camera-speed
    modulation on top.
    """
    medians = (np.asarray(tier_medians, dtype=np.float64)
               if tier_medians is not None else None)

    def cost(settings: RenderSettings, camera_speed: float) -> float:
        pixels = settings.rho ** 2 * base_pixels
        pred = predict_frame_time(model, settings, camera_speed, pixels,
                                  occupancy_hint)
        if medians is None:
            return pred
        ref = predict_frame_time(model, settings, 0.0, pixels, occupancy_hint)
        return float(medians[settings.tier] * pred / max(ref, 1e-9))

    return cost


# -- benchmarking ------------------------------------------------------------

def default_benchmark_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics.from_fov_x(160, 160, 0.6911112)


def _pose_speeds(prev_pose, pose, dt_s: float):
    if prev_pose is None or dt_s <= 0:
        return 0.0, 0.0
    dv = float(np.linalg.norm(pose.position - prev_pose.position))
    cos_a = (np.trace(prev_pose.rotation.T @ pose.rotation) - 1.0) / 2.0
    ang = float(np.arccos(np.clip(cos_a, -1.0, 1.0)))
    return dv / dt_s, ang / dt_s


def run_benchmark(grid: VoxelGrid, duration_s: float = 25.0,
                  trajectory: OrbitTrajectory | None = None,
                  intrinsics: CameraIntrinsics | None = None,
                  tier_table: TierTable = DEFAULT_TIERS) -> list:
    """Render the benchmark path cycling all tiers; returns telemetry.

    Tiers are scheduled by time quota (duration/8 each, in order), so every
    tier accrues at least duration/10 seconds of frames.
    """
    if duration_s < 5.0:
        raise InvalidArgument("benchmark needs at least 5 seconds")
    if intrinsics is None:
        intrinsics = default_benchmark_intrinsics()
    if trajectory is None:
        half = 0.5 * (grid.bbox_max - grid.bbox_min)
        center = grid.bbox_min + half
        trajectory = OrbitTrajectory(center=center,
                                     radius=2.2 * float(np.linalg.norm(half)))
    quota_s = duration_s / N_TIERS
    telemetry = []
    elapsed = np.zeros(N_TIERS)
    clock_s = 0.0
    prev_pose = None
    while clock_s < duration_s:
        remaining = np.nonzero(elapsed < quota_s)[0]
        tier = int(remaining[0]) if remaining.size else \
            int(np.argmin(elapsed))
        settings = tier_table.settings(tier)
        pose = trajectory.pose_at(clock_s)
        _img, stats = render_image(grid, intrinsics, pose, settings)
        dt_s = stats.frame_time / 1000.0
        speed, ang = _pose_speeds(prev_pose, pose, dt_s)
        telemetry.append(TelemetryRecord(
            timestamp=clock_s * 1000.0, frame_time=stats.frame_time,
            settings=settings, camera_speed=speed, angular_speed=ang,
            pixel_count=stats.rays, occupancy_hint=stats.occupied_fraction))
        elapsed[tier] += dt_s
        clock_s += dt_s
        prev_pose = pose
    return telemetry


# -- controller training -------------------------------------------------------

def _fit_cost_model(telemetry, library, k_default: int = 1):
    """Ridge model from own telemetry merged with k-NN matched library data."""
    profile = extract_profile(telemetry)
    merged = list(telemetry)
    if library:
        k = min(k_default, len(library))
        matches = knn_match(profile, library, k)
        if matches and len(library) >= 3:
            # fall back to a k=3 blend when the nearest machine is far off
            pairwise = []
            for i in range(len(library)):
                for j in range(i + 1, len(library)):
                    pairwise.append(np.linalg.norm(
                        np.log(library[i].profile.feature_vector())
                        - np.log(library[j].profile.feature_vector())))
            if pairwise and matches[0][1] > 2.0 * float(np.median(pairwise)):
                matches = knn_match(profile, library, min(3, len(library)))
        merged.extend(rec for rec, _d in matches)
    else:
        warnings.warn("profile library is empty; training on self-collected "
                      "telemetry only", stacklevel=2)
    x, y = telemetry_features(merged)
    return fit_ridge(x, y, lam=1e-3), profile


def train_quiq(grid: VoxelGrid, mode: str = "dedicated",
               budget_s: float = 60.0, target_fps: float = 30.0,
               profile_library=None, seed: int = 0,
               intrinsics: CameraIntrinsics | None = None,
               trajectory: OrbitTrajectory | None = None,
               tier_table: TierTable = DEFAULT_TIERS,
               telemetry=None) -> QTable:
    """Train the pacing policy within a time budget.

    Dedicated mode spends up to 25 s benchmarking (skipped when the caller
    passes benchmark telemetry it already collected), fits the ridge cost
    model (merging k-NN matched library telemetry), then trains the Q table
    against the simulated environment for the remaining budget at the
    nominal control rate. Async mode interleaves training slices with live
    rendering and refits the cost model every 5 s of accumulated telemetry.
    """
    if mode not in ("dedicated", "async"):
        raise InvalidArgument(f"unknown training mode {mode!r}")
    if budget_s < 10.0:
        raise InvalidArgument("budget must be at least 10 seconds")
    rng = np.random.default_rng(seed)
    if intrinsics is None:
        intrinsics = default_benchmark_intrinsics()
    base_pixels = intrinsics.width * intrinsics.height
    library = list(profile_library) if profile_library else []

    if mode == "dedicated":
        start = time.perf_counter()
        bench_s = min(25.0, max(5.0, budget_s - 5.0))
        if telemetry is None:
            telemetry = run_benchmark(grid, bench_s, trajectory, intrinsics,
                                      tier_table)
            used = time.perf_counter() - start
        else:
            used = bench_s  # the caller's benchmark counts against the budget
        model, profile = _fit_cost_model(telemetry, library)
        occ = float(np.mean([r.occupancy_hint for r in telemetry]))
        env = SimEnv(ridge_cost_fn(model, base_pixels, occ,
                                   tier_medians=profile.median_ms), target_fps)
        steps = int(max(5.0, budget_s - used) * SIM_STEPS_PER_SECOND)
        qtable = QTable()
        train_quiq_policy(env, qtable, steps, rng)
        return qtable

    trainer = AsyncQuiqTrainer(target_fps=target_fps, library=library,
                               base_pixels=base_pixels, tier_table=tier_table,
                               seed=seed)
    if trajectory is None:
        half = 0.5 * (grid.bbox_max - grid.bbox_min)
        trajectory = OrbitTrajectory(
            center=grid.bbox_min + half,
            radius=2.2 * float(np.linalg.norm(half)))
    clock_s = 0.0
    prev_pose = None
    start = time.perf_counter()
    tier_cycle = 0
    while time.perf_counter() - start < budget_s:
        # keep live rendering going, sweeping tiers for coverage
        settings = tier_table.settings(tier_cycle % N_TIERS)
        tier_cycle += 1
        pose = trajectory.pose_at(clock_s)
        _img, stats = render_image(grid, intrinsics, pose, settings)
        dt_s = stats.frame_time / 1000.0
        speed, ang = _pose_speeds(prev_pose, pose, dt_s)
        trainer.feed(TelemetryRecord(
            timestamp=clock_s * 1000.0, frame_time=stats.frame_time,
            settings=settings, camera_speed=speed, angular_speed=ang,
            pixel_count=stats.rays, occupancy_hint=stats.occupied_fraction))
        clock_s += dt_s
        prev_pose = pose
        trainer.train_slice(int(dt_s * SIM_STEPS_PER_SECOND))
    return trainer.qtable


class AsyncQuiqTrainer:
    """Background trainer fed by live telemetry.

    Call feed() with each frame's record and train_slice() whenever there is
    slack; the ridge model refits every refit_interval_s of accumulated
    telemetry once all tiers have been seen.
    """

    def __init__(self, target_fps: float, library=None, base_pixels: int = 25600,
                 tier_table: TierTable = DEFAULT_TIERS, seed: int = 0,
                 refit_interval_s: float = 5.0):
        self.target_fps = target_fps
        self.library = list(library) if library else []
        self.base_pixels = base_pixels
        self.tier_table = tier_table
        self.refit_interval_s = refit_interval_s
        self.rng = np.random.default_rng(seed)
        self.qtable = QTable()
        self.telemetry: list[TelemetryRecord] = []
        self.env: SimEnv | None = None
        self._since_refit_s = 0.0
        self._warned_empty = False

    def feed(self, record: TelemetryRecord) -> None:
        self.telemetry.append(record)
        self._since_refit_s += record.frame_time / 1000.0
        if self.env is None or self._since_refit_s >= self.refit_interval_s:
            self._maybe_refit()

    def _maybe_refit(self) -> None:
        tiers_seen = {r.settings.tier for r in self.telemetry}
        if tiers_seen != set(range(N_TIERS)):
            return
        if not self.library and not self._warned_empty:
            self._warned_empty = True
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model, profile = _fit_cost_model(self.telemetry, self.library)
        occ = float(np.mean([r.occupancy_hint for r in self.telemetry]))
        self.env = SimEnv(
            ridge_cost_fn(model, self.base_pixels, occ,
                          tier_medians=profile.median_ms),
            self.target_fps)
        self._since_refit_s = 0.0

    def train_slice(self, steps: int) -> None:
        if self.env is None or steps <= 0:
            return
        train_quiq_policy(self.env, self.qtable, steps, self.rng)


# -- runtime control -----------------------------------------------------------

@dataclass
class ControlInput:
    """Live state consumed by the controller each frame."""

    fps_ema: float
    camera_speed: float
    tier: int


def control_step(qtable: QTable, tier_table: TierTable,
                 live_state: ControlInput, target_fps: float) -> RenderSettings:
    """Greedy table lookup -> next frame's settings. Pure and O(1)."""
    err = (live_state.fps_ema - target_fps) / target_fps
    s = state_index(fps_error_bucket(err), speed_bucket(live_state.camera_speed),
                    int(np.clip(live_state.tier, 0, N_TIERS - 1)))
    action = qtable.greedy(s)
    new_tier = int(np.clip(live_state.tier + (action - 1), 0, N_TIERS - 1))
    return tier_table.settings(new_tier)


def quality_score(qtable: QTable, env: SimEnv, steps: int,
                  rng: np.random.Generator) -> float:
    """Mean reward of the greedy policy rolled out on an environment."""
    total = 0.0
    s = env.reset(rng)
    for _ in range(steps):
        a = qtable.greedy(s)
        s, r = env.step(a, rng)
        total += r
    return total / max(1, steps)


# -- Q-table files -------------------------------------------------------------

def save_qtable(path, qtable: QTable) -> None:
    """Text format: header 'vfq v1', then 360 lines 'state action value'."""
    with open(path, "w") as f:
        f.write("vfq v1\n")
        for s in range(N_STATES):
            for a in range(N_ACTIONS):
                f.write(f"{s} {a} {qtable.values[s, a]:.17g}\n")


def load_qtable(path) -> QTable:
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or lines[0] != "vfq v1":
        raise CorruptModel(f"{path}: bad qtable header")
    if len(lines) != 1 + N_STATES * N_ACTIONS:
        raise CorruptModel(f"{path}: expected {N_STATES * N_ACTIONS} entries")
    values = np.zeros((N_STATES, N_ACTIONS))
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 3:
            raise CorruptModel(f"{path}: bad line {ln!r}")
        s, a = int(parts[0]), int(parts[1])
        if not (0 <= s < N_STATES and 0 <= a < N_ACTIONS):
            raise CorruptModel(f"{path}: index out of range in {ln!r}")
        values[s, a] = float(parts[2])
    return QTable(values=values)
