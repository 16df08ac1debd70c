"""Simulated-load harness for exercising the controller under varying cost.

A load curve file holds lines of `<t_seconds> <cost_multiplier>`; the harness
renders real frames and multiplies the measured render cost by the curve's
interpolated multiplier to emulate background load. The harness clock
advances by the inflated frame time, so a run covers its simulated duration
regardless of how fast the real renders are.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .profiles import TelemetryRecord
from .quiq import (DEFAULT_TIERS, ControlInput, QTable, TierTable,
                   _pose_speeds, control_step)
from .scene_io import CameraIntrinsics, OrbitTrajectory
from .volume_renderer import render_image

EMA_WEIGHT = 0.7  # per-frame weight of the fps EMA
CONTROL_COOLDOWN = 1  # frames to hold after a tier change so the EMA settles


@dataclass
class LoadCurve:
    """Piecewise-linear background-load multiplier over time."""

    times: np.ndarray
    multipliers: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.multipliers = np.asarray(self.multipliers, dtype=np.float64)
        if self.times.size == 0 or self.times.size != self.multipliers.size:
            raise InvalidArgument("load curve needs matching times/multipliers")
        if np.any(np.diff(self.times) < 0):
            raise InvalidArgument("load curve times must be non-decreasing")
        if np.any(self.multipliers <= 0):
            raise InvalidArgument("cost multipliers must be positive")

    def multiplier(self, t: float) -> float:
        return float(np.interp(t, self.times, self.multipliers))

    @classmethod
    def parse(cls, text: str) -> "LoadCurve":
        times = []
        mults = []
        for ln in text.splitlines():
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            parts = ln.split()
            if len(parts) != 2:
                raise InvalidArgument(f"bad load curve line {ln!r}")
            times.append(float(parts[0]))
            mults.append(float(parts[1]))
        return cls(np.asarray(times), np.asarray(mults))

    @classmethod
    def load(cls, path) -> "LoadCurve":
        with open(path) as f:
            return cls.parse(f.read())


def ladder_cost_fn(tier_costs_ms):
    """Fixed per-tier frame-cost model (ms at no background load)."""
    costs = [float(c) for c in tier_costs_ms]

    def cost(settings, camera_speed):
        return costs[settings.tier]

    return cost


def choose_pacing_target(tier_costs_ms, load_span: float = 4.0,
                         rest_lo: float = 1.01, rest_hi: float = 1.15):
    """Candidate target framerates for pacing a machine with these tier costs.

    A target is workable when some tier rests a few percent above it at no
    load and another tier does the same at full background load; candidates
    are ordered by how much margin the rest points keep from the
    controller's decision edges. Returns a list of (target_fps, tier_at_1x,
    tier_at_load) tuples, best first.
    """
    costs = np.asarray(tier_costs_ms, dtype=np.float64)

    def scan(lo_e, hi_e):
        out = []
        for b in range(2, 7):
            for a in range(1, b):
                ratio = costs[b] / (load_span * costs[a])
                lo = max(lo_e, lo_e / ratio)
                hi = min(hi_e, hi_e / ratio)
                if lo > hi:
                    continue
                mult = 0.5 * (lo + hi)
                out.append((hi - lo, 1000.0 / costs[b] / mult, b, a))
        out.sort(reverse=True)
        return [(t, b, a) for _margin, t, b, a in out]

    candidates = scan(rest_lo, rest_hi)
    # relaxed second pass for irregular ladders; callers should validate
    for t, b, a in scan(0.97, 1.18):
        if (t, b, a) not in candidates:
            candidates.append((t, b, a))
    return candidates


def validate_pacing(qtable, tier_costs_ms, target_fps: float, curve,
                    duration_s: float = 45.0) -> float:
    """Synthetic in-band fraction of a trained controller on a cost ladder.

    Used to pre-validate a (target, policy) pair before running the real
    harness; costs are in ms at no load.
    """
    grid = _DummyBox()
    run = run_paced(grid, curve, duration_s, target_fps, qtable=qtable,
                    cost_fn=ladder_cost_fn(tier_costs_ms))
    return run.in_band_fraction()


class _DummyBox:
    """Minimal bbox-bearing stand-in for synthetic (cost_fn) harness runs."""

    bbox_min = np.zeros(3)
    bbox_max = np.ones(3)


@dataclass
class PacedRun:
    """Telemetry of one harness run plus the target it was paced against."""

    records: list
    target_fps: float
    warmup_s: float = 3.0

    def post_warmup(self) -> list:
        return [r for r in self.records
                if r.timestamp >= self.warmup_s * 1000.0]

    def in_band_fraction(self, band: float = 0.2) -> float:
        recs = self.post_warmup()
        if not recs:
            return 0.0
        fps = np.array([1000.0 / r.frame_time for r in recs])
        ok = np.abs(fps - self.target_fps) <= band * self.target_fps
        return float(np.mean(ok))

    def frame_time_cv(self) -> float:
        times = np.array([r.frame_time for r in self.post_warmup()])
        return float(times.std() / times.mean()) if times.size else 0.0


class StaticCamera:
    """Trajectory that never moves; isolates load as the only disturbance."""

    def __init__(self, pose):
        self._pose = pose

    def pose_at(self, _t: float):
        return self._pose


def run_paced(grid, curve: LoadCurve, duration_s: float, target_fps: float,
              qtable: QTable | None = None, fixed_tier: int | None = None,
              intrinsics: CameraIntrinsics | None = None,
              trajectory=None,
              tier_table: TierTable = DEFAULT_TIERS,
              start_tier: int = 4, cost_fn=None) -> PacedRun:
    """Drive the renderer under the load curve for duration_s simulated seconds.

    Exactly one of qtable (controller-paced) or fixed_tier (baseline) selects
    the tier policy. The camera is static by default so the load curve is
    the only cost disturbance; pass a trajectory for a moving camera.
    cost_fn(settings, camera_speed) -> ms substitutes real rendering when
    provided (used by fast tests); by default frames are rendered for real
    and their measured cost is inflated by the curve.
    """
    if (qtable is None) == (fixed_tier is None):
        raise InvalidArgument("pass exactly one of qtable or fixed_tier")
    from .quiq import default_benchmark_intrinsics
    from .scene_io import look_at_pose

    if intrinsics is None:
        intrinsics = default_benchmark_intrinsics()
    if trajectory is None:
        half = 0.5 * (grid.bbox_max - grid.bbox_min)
        center = grid.bbox_min + half
        radius = 2.2 * float(np.linalg.norm(half))
        eye = center + radius * np.array([0.9063, 0.0, 0.4226])  # 25 deg up
        trajectory = StaticCamera(look_at_pose(eye, center))

    tier = int(fixed_tier) if fixed_tier is not None else int(start_tier)
    fps_ema = target_fps
    clock_s = 0.0
    prev_pose = None
    frames_since_change = CONTROL_COOLDOWN
    records = []
    while clock_s < duration_s:
        settings = tier_table.settings(tier)
        pose = trajectory.pose_at(clock_s)
        if cost_fn is None:
            _img, stats = render_image(grid, intrinsics, pose, settings)
            measured_ms = stats.frame_time
            pixel_count = stats.rays
            occupancy = stats.occupied_fraction
        else:
            speed_probe, _ = _pose_speeds(prev_pose, pose, 1.0)
            measured_ms = float(cost_fn(settings, speed_probe))
            pixel_count = max(1, int(settings.rho ** 2
                                     * intrinsics.width * intrinsics.height))
            occupancy = 0.5
        reported_ms = measured_ms * curve.multiplier(clock_s)
        dt_s = reported_ms / 1000.0
        speed, ang = _pose_speeds(prev_pose, pose, dt_s)
        records.append(TelemetryRecord(
            timestamp=clock_s * 1000.0, frame_time=reported_ms,
            settings=settings, camera_speed=speed, angular_speed=ang,
            pixel_count=pixel_count, occupancy_hint=occupancy))
        fps = 1000.0 / reported_ms
        fps_ema = EMA_WEIGHT * fps + (1.0 - EMA_WEIGHT) * fps_ema
        frames_since_change += 1
        if qtable is not None and frames_since_change >= CONTROL_COOLDOWN:
            chosen = control_step(qtable, tier_table,
                                  ControlInput(fps_ema=fps_ema,
                                               camera_speed=speed, tier=tier),
                                  target_fps)
            if chosen.tier != tier:
                frames_since_change = 0
            tier = chosen.tier
        clock_s += dt_s
        prev_pose = pose
    return PacedRun(records=records, target_fps=target_fps)
