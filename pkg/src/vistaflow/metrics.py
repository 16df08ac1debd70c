"""Image-quality and framerate statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import DimensionMismatch, EmptyTelemetry, ImageTooSmall
from .scene_io import ImageBuffer

# Rec.709 luma weights
_LUMA = np.array([0.2126, 0.7152, 0.0722])
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


@dataclass
class QualityReport:
    psnr: float  # dB; +inf when images are identical
    ssim: float


@dataclass
class FpsStats:
    mean_fps: float
    median_fps: float
    p10_fps: float
    frame_time_cv: float  # stddev(frame_time) / mean(frame_time)


def _as_rgb(img) -> np.ndarray:
    if isinstance(img, ImageBuffer):
        return img.rgb
    return np.asarray(img, dtype=np.float64)


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images.

    Identical images return +inf.
    """
    ra, rb = _as_rgb(a), _as_rgb(b)
    if ra.shape != rb.shape:
        raise DimensionMismatch(f"image shapes differ: {ra.shape} vs {rb.shape}")
    mse = float(np.mean((ra - rb) ** 2))
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _windowed(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable Gaussian filter restricted to fully-valid windows."""
    half = (len(kernel) - 1) // 2
    out = correlate1d(img, kernel, axis=0, mode="constant")
    out = correlate1d(out, kernel, axis=1, mode="constant")
    return out[half:-half, half:-half]


def ssim(a, b) -> float:
    """Mean local SSIM on Rec.709 luma with an 11x11 Gaussian window."""
    ra, rb = _as_rgb(a), _as_rgb(b)
    if ra.shape != rb.shape:
        raise DimensionMismatch(f"image shapes differ: {ra.shape} vs {rb.shape}")
    la = ra @ _LUMA if ra.ndim == 3 else ra
    lb = rb @ _LUMA if rb.ndim == 3 else rb
    if min(la.shape) < _SSIM_WINDOW:
        raise ImageTooSmall(
            f"images must be at least {_SSIM_WINDOW} px per side")

    kernel = _gaussian_kernel(_SSIM_WINDOW, _SSIM_SIGMA)
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    mu_a = _windowed(la, kernel)
    mu_b = _windowed(lb, kernel)
    var_a = _windowed(la * la, kernel) - mu_a * mu_a
    var_b = _windowed(lb * lb, kernel) - mu_b * mu_b
    cov = _windowed(la * lb, kernel) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def quality_report(a, b) -> QualityReport:
    return QualityReport(psnr=psnr(a, b), ssim=ssim(a, b))


def percentile_sorted(values, q: float) -> float:
    """Linear-interpolation percentile of a sequence, q in [0, 1]."""
    s = np.sort(np.asarray(values, dtype=np.float64))
    if s.size == 1:
        return float(s[0])
    pos = q * (s.size - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, s.size - 1)
    frac = pos - lo
    return float(s[lo] * (1.0 - frac) + s[hi] * frac)


def fps_stats(telemetry) -> FpsStats:
    """Aggregate framerate statistics from telemetry records.

    Accepts TelemetryRecord-like objects (with a frame_time attribute) or
    plain frame times in milliseconds.
    """
    times = np.asarray([getattr(t, "frame_time", t) for t in telemetry],
                       dtype=np.float64)
    if times.size == 0:
        raise EmptyTelemetry("no telemetry records")
    fps = 1000.0 / times
    mean_ft = float(times.mean())
    cv = float(times.std() / mean_ft) if mean_ft > 0 else 0.0
    return FpsStats(mean_fps=float(fps.mean()),
                    median_fps=percentile_sorted(fps, 0.5),
                    p10_fps=percentile_sorted(fps, 0.1),
                    frame_time_cv=cv)
