"""Benchmark telemetry, per-machine profiles, and k-NN profile matching.

A benchmark profile summarizes a machine's performance envelope as the
per-tier median and p90 frame time over the standard benchmark trajectory
(16 features). Profile files are line-oriented text:

    vfprofile v1 <machine-label>
    tier <t> median_ms <x> p90_ms <y>        (8 lines, tiers in order)
    rec <timestamp_ms> <frame_time_ms> <tier> <camera_speed> <pixel_count> <occupancy_hint>
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import (CorruptModel, EmptyLibrary, IncompleteTelemetry,
                     InvalidArgument)
from .metrics import percentile_sorted
from .volume_renderer import RenderSettings

N_TIERS = 8


@dataclass
class TelemetryRecord:
    """One frame's performance measurement."""

    timestamp: float  # ms since run start
    frame_time: float  # ms
    settings: RenderSettings
    camera_speed: float  # world units/s
    angular_speed: float  # rad/s
    pixel_count: int  # rays this frame
    occupancy_hint: float  # fraction of rays hitting occupied space

    def __post_init__(self):
        if self.frame_time <= 0:
            raise InvalidArgument("frame_time must be positive")
        if self.pixel_count < 1:
            raise InvalidArgument("pixel_count must be >= 1")


@dataclass
class BenchmarkProfile:
    """Per-tier median and p90 frame times, in tier order."""

    median_ms: np.ndarray  # (8,)
    p90_ms: np.ndarray  # (8,)
    machine: str = ""

    def __post_init__(self):
        self.median_ms = np.asarray(self.median_ms, dtype=np.float64)
        self.p90_ms = np.asarray(self.p90_ms, dtype=np.float64)
        if self.median_ms.shape != (N_TIERS,) or self.p90_ms.shape != (N_TIERS,):
            raise InvalidArgument("profiles carry 8 tiers")
        if (self.median_ms <= 0).any() or (self.p90_ms <= 0).any():
            raise InvalidArgument("profile times must be positive")

    def feature_vector(self) -> np.ndarray:
        """16 features: (median, p90) interleaved per tier."""
        return np.stack([self.median_ms, self.p90_ms], axis=1).reshape(-1)


@dataclass
class ProfileEntry:
    """A library entry: profile summary plus its raw telemetry."""

    profile: BenchmarkProfile
    records: list


def extract_profile(telemetry, machine: str = "") -> BenchmarkProfile:
    """Summarize telemetry into per-tier median and p90 frame times."""
    by_tier = {t: [] for t in range(N_TIERS)}
    for rec in telemetry:
        by_tier[rec.settings.tier].append(rec.frame_time)
    missing = [t for t in range(N_TIERS) if not by_tier[t]]
    if missing:
        raise IncompleteTelemetry(f"no frames for tiers {missing}")
    med = np.array([percentile_sorted(by_tier[t], 0.5) for t in range(N_TIERS)])
    p90 = np.array([percentile_sorted(by_tier[t], 0.9) for t in range(N_TIERS)])
    return BenchmarkProfile(median_ms=med, p90_ms=p90, machine=machine)


def knn_match(query: BenchmarkProfile, library, k: int = 1):
    """Merge the telemetry of the k nearest library profiles.

    Distance is Euclidean between log-transformed 16-feature vectors; ties
    resolve in library order. Returns a list of (record, source_distance).
    """
    if not library:
        raise EmptyLibrary("profile library is empty")
    if not (1 <= k <= len(library)):
        raise InvalidArgument(f"k must be in 1..{len(library)}, got {k}")
    qv = np.log(query.feature_vector())
    dists = np.array([
        float(np.linalg.norm(np.log(e.profile.feature_vector()) - qv))
        for e in library])
    order = np.argsort(dists, kind="stable")[:k]
    merged = []
    for i in order:
        merged.extend((rec, float(dists[i])) for rec in library[i].records)
    return merged


# -- profile files -----------------------------------------------------------

def save_profile(path, profile: BenchmarkProfile, telemetry) -> None:
    with open(path, "w") as f:
        f.write(f"vfprofile v1 {profile.machine}\n")
        for t in range(N_TIERS):
            f.write(f"tier {t} median_ms {profile.median_ms[t]:.6g} "
                    f"p90_ms {profile.p90_ms[t]:.6g}\n")
        for rec in telemetry:
            f.write(f"rec {rec.timestamp:.6g} {rec.frame_time:.6g} "
                    f"{rec.settings.tier} {rec.camera_speed:.6g} "
                    f"{rec.pixel_count} {rec.occupancy_hint:.6g}\n")


def load_profile(path) -> ProfileEntry:
    from .quiq import DEFAULT_TIERS  # deferred: quiq imports this module

    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    if not lines:
        raise CorruptModel(f"{path}: empty profile file")
    head = lines[0].split(maxsplit=2)
    if len(head) < 2 or head[0] != "vfprofile" or head[1] != "v1":
        raise CorruptModel(f"{path}: bad profile header {lines[0]!r}")
    machine = head[2] if len(head) == 3 else ""

    med = np.zeros(N_TIERS)
    p90 = np.zeros(N_TIERS)
    seen = set()
    records = []
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "tier":
            if len(parts) != 6 or parts[2] != "median_ms" or parts[4] != "p90_ms":
                raise CorruptModel(f"{path}: bad tier line {ln!r}")
            t = int(parts[1])
            med[t] = float(parts[3])
            p90[t] = float(parts[5])
            seen.add(t)
        elif parts[0] == "rec":
            if len(parts) != 7:
                raise CorruptModel(f"{path}: bad rec line {ln!r}")
            tier = int(parts[3])
            records.append(TelemetryRecord(
                timestamp=float(parts[1]), frame_time=float(parts[2]),
                settings=DEFAULT_TIERS.settings(tier),
                camera_speed=float(parts[4]), angular_speed=0.0,
                pixel_count=int(parts[5]), occupancy_hint=float(parts[6])))
        else:
            raise CorruptModel(f"{path}: unknown line {ln!r}")
    if seen != set(range(N_TIERS)):
        raise CorruptModel(f"{path}: profile must list tiers 0..7")
    return ProfileEntry(profile=BenchmarkProfile(med, p90, machine),
                        records=records)


def load_profile_library(directory) -> list:
    """Load every profile file in a directory (sorted by name)."""
    entries = []
    if not os.path.isdir(directory):
        return entries
    for name in sorted(os.listdir(directory)):
        path = os.path.join(directory, name)
        if os.path.isfile(path):
            entries.append(load_profile(path))
    return entries
