"""Deterministic ray-marched image formation.

Marching follows the emission-absorption model: along each ray, samples at
t_i = t_near + (i + 1/2) * delta contribute alpha_i = 1 - exp(-sigma_i *
delta) attenuated by the transmittance T_i = exp(-sum_{j<i} sigma_j * delta);
the accumulated color is sum_i T_i * alpha_i * c_i plus leftover
transmittance times the background. A ray stops early once its transmittance
falls below the termination threshold gamma.

Sampling offsets are fixed (never jittered) so renders are bit-reproducible
and frame cost is a noise-free function of the settings.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSettings
from .scene_io import CameraIntrinsics, CameraPose, ImageBuffer, Ray, generate_rays
from .voxel_model import N_SH, VoxelGrid, logistic, sh_basis

WHITE = np.array([1.0, 1.0, 1.0])
_CHUNK = 16384  # rays per work unit; fixed so output never depends on workers


@dataclass(frozen=True)
class RenderSettings:
    """The controller-owned quality knobs.

    delta_scale multiplies the base step length (1 = finest), gamma is the
    transmittance threshold below which a ray terminates, rho scales the
    output raster, and tier is the quality-tier index this triple came from.
    """

    delta_scale: float = 1.0
    gamma: float = 5e-4
    rho: float = 1.0
    tier: int = 7

    def __post_init__(self):
        if not (1.0 <= self.delta_scale <= 8.0):
            raise InvalidSettings(f"delta_scale must be in [1, 8], got {self.delta_scale}")
        if not (0.0 < self.gamma < 1.0):
            raise InvalidSettings(f"gamma must be in (0, 1), got {self.gamma}")
        if not (0.0 < self.rho <= 1.0):
            raise InvalidSettings(f"rho must be in (0, 1], got {self.rho}")
        if not (0 <= int(self.tier) <= 7):
            raise InvalidSettings(f"tier must be in 0..7, got {self.tier}")


@dataclass
class FrameStats:
    """Per-frame performance telemetry."""

    frame_time: float  # ms
    rays: int
    samples: int
    early_terminated: int
    raster: tuple
    occupied_fraction: float = 0.0  # fraction of rays absorbing anything

    def __post_init__(self):
        if self.frame_time <= 0:
            raise InvalidSettings("frame_time must be positive")
        if self.early_terminated > self.rays:
            raise InvalidSettings("early_terminated cannot exceed rays")


def base_step(grid: VoxelGrid) -> float:
    """Base marching step: half the voxel diagonal at current resolution."""
    return 0.5 * grid.voxel_diagonal


def ray_aabb(ray: Ray, bbox_min, bbox_max):
    """Slab intersection of a single ray with an axis-aligned box.

    Returns (t_near, t_far) with t_near clamped to >= 0, or None on a miss.
    """
    t_near, t_far, hit = _ray_aabb_batch(
        np.asarray(ray.origin, dtype=np.float64).reshape(1, 3),
        np.asarray(ray.direction, dtype=np.float64).reshape(1, 3),
        np.asarray(bbox_min, dtype=np.float64),
        np.asarray(bbox_max, dtype=np.float64))
    if not hit[0]:
        return None
    return float(t_near[0]), float(t_far[0])


def _ray_aabb_batch(origins, dirs, bbox_min, bbox_max):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t0 = (bbox_min - origins) * inv
        t1 = (bbox_max - origins) * inv
    tmin = np.minimum(t0, t1)
    tmax = np.maximum(t0, t1)
    parallel = dirs == 0.0
    if parallel.any():
        inside = (origins >= bbox_min) & (origins <= bbox_max)
        tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), tmin)
        tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), tmax)
    t_near = np.maximum(np.max(tmin, axis=-1), 0.0)
    t_far = np.min(tmax, axis=-1)
    return t_near, t_far, t_far >= t_near


@dataclass
class _StepRecord:
    ray_idx: np.ndarray  # (A,) indices into the batch
    corners: np.ndarray  # (A, 8) flat voxel indices
    weights: np.ndarray  # (A, 8) trilinear weights
    occ: np.ndarray  # (A, 8) occupancy factors
    sigma_raw: np.ndarray  # (A,) unclamped interpolated density
    gamma: np.ndarray  # (A,) per-sample alpha
    trans_before: np.ndarray  # (A,) transmittance reaching the sample
    color: np.ndarray  # (A, 3) post-logistic sample color


@dataclass
class MarchResult:
    rgb: np.ndarray  # (N, 3)
    transmittance: np.ndarray  # (N,) leftover transmittance
    weight_sum: np.ndarray  # (N,) sum of sample weights
    samples: int
    early_terminated: int
    hit: np.ndarray  # (N,) bbox intersection mask
    basis: np.ndarray  # (N, 9) SH basis per ray direction
    delta: float
    steps: list = field(default_factory=list)


def _march_core(grid: VoxelGrid, origins, dirs, settings: RenderSettings,
                background=WHITE, record: bool = False) -> MarchResult:
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    n = origins.shape[0]
    background = np.asarray(background, dtype=np.float64)

    rgb = np.zeros((n, 3))
    trans = np.ones(n)
    weight_sum = np.zeros(n)
    t_near, t_far, hit = _ray_aabb_batch(origins, dirs, grid.bbox_min,
                                         grid.bbox_max)
    delta = settings.delta_scale * base_step(grid)
    basis = sh_basis(dirs)
    early = 0
    samples_total = 0
    steps: list[_StepRecord] = []

    dens_flat = grid.density.reshape(-1)
    sh_flat = grid.sh.reshape(-1, N_SH)
    active = np.nonzero(hit)[0]
    k = 0
    while active.size:
        t = t_near[active] + (k + 0.5) * delta
        keep = t <= t_far[active]
        active = active[keep]
        if not active.size:
            break
        t = t[keep]
        pts = origins[active] + dirs[active] * t[:, None]

        lin, w, occ, _inside = grid.interp_corners(pts)
        wocc = w * occ
        sigma_raw = np.einsum("nc,nc->n", dens_flat[lin], wocc)
        shv = np.einsum("ncd,nc->nd", sh_flat[lin], wocc)
        sigma = np.maximum(sigma_raw, 0.0)

        pre = np.einsum("ncm,nm->nc", shv.reshape(-1, 3, 9), basis[active])
        color = logistic(pre)
        att = np.exp(-sigma * delta)
        alpha = 1.0 - att
        tb = trans[active]
        contrib = tb * alpha
        rgb[active] += contrib[:, None] * color
        weight_sum[active] += contrib
        trans[active] = tb * att
        samples_total += active.size

        if record:
            steps.append(_StepRecord(ray_idx=active.copy(), corners=lin,
                                     weights=w, occ=occ, sigma_raw=sigma_raw,
                                     gamma=alpha, trans_before=tb,
                                     color=color))
        terminated = trans[active] < settings.gamma
        early += int(np.count_nonzero(terminated))
        active = active[~terminated]
        k += 1

    rgb += trans[:, None] * background
    return MarchResult(rgb=rgb, transmittance=trans, weight_sum=weight_sum,
                       samples=samples_total, early_terminated=early, hit=hit,
                       basis=basis, delta=delta, steps=steps)


def march_recorded(grid: VoxelGrid, origins, dirs,
                   settings: RenderSettings) -> MarchResult:
    """March a batch keeping per-sample records (for gradients and pruning)."""
    return _march_core(grid, origins, dirs, settings, record=True)


@dataclass
class MarchAux:
    """Side information returned with a marched ray."""

    samples: int
    transmittance: float
    weight_sum: float


def march_ray(grid: VoxelGrid, ray: Ray, settings: RenderSettings,
              background=WHITE):
    """Render one ray; returns (rgb, MarchAux)."""
    res = _march_core(grid, ray.origin, ray.direction, settings, background)
    return res.rgb[0], MarchAux(samples=res.samples,
                                transmittance=float(res.transmittance[0]),
                                weight_sum=float(res.weight_sum[0]))


# -- gradients ---------------------------------------------------------------

@dataclass
class GridGradients:
    """Dense gradient accumulators matching a grid's parameter arrays."""

    density: np.ndarray  # (Nx, Ny, Nz)
    sh: np.ndarray  # (Nx, Ny, Nz, 27)


@dataclass
class SparseGradients:
    """Gradients restricted to the touched voxels (flat C-order indices)."""

    indices: np.ndarray  # (K,) unique voxel ids
    density: np.ndarray  # (K,)
    sh: np.ndarray  # (K, 27)

    def to_dense(self, dims) -> GridGradients:
        n = dims[0] * dims[1] * dims[2]
        dd = np.zeros(n)
        ds = np.zeros((n, N_SH))
        dd[self.indices] = self.density
        ds[self.indices] = self.sh
        return GridGradients(density=dd.reshape(dims),
                             sh=ds.reshape(dims + (N_SH,)))


def accumulate_rows(inv: np.ndarray, rows: np.ndarray, n_out: int) -> np.ndarray:
    """Sum rows (n, C) into (n_out, C) groups given group ids per row."""
    rows_t = np.ascontiguousarray(rows.T)
    out = np.empty((rows.shape[1], n_out))
    for ch in range(rows.shape[1]):
        out[ch] = np.bincount(inv, weights=rows_t[ch], minlength=n_out)
    return np.ascontiguousarray(out.T)


def merge_sparse(a: SparseGradients, b: SparseGradients) -> SparseGradients:
    """Sum two sparse gradient sets over the union of their indices."""
    idx = np.concatenate([a.indices, b.indices])
    uniq, inv = np.unique(idx, return_inverse=True)
    dens = np.bincount(inv, weights=np.concatenate([a.density, b.density]),
                       minlength=uniq.size)
    sh = accumulate_rows(inv, np.concatenate([a.sh, b.sh]), uniq.size)
    return SparseGradients(indices=uniq, density=dens, sh=sh)


def march_batch_with_grads(grid: VoxelGrid, origins, dirs, targets,
                           settings: RenderSettings, background=WHITE,
                           sparse: bool = False):
    """Forward + reverse pass over a ray batch.

    The objective is the sum over rays of the squared L2 color error
    ||C - target||^2. Returns (rgb (N,3), per_ray_loss (N,), gradients);
    gradients are dense GridGradients, or SparseGradients over touched
    voxels when sparse=True. Clamped density (raw interpolation < 0)
    propagates zero gradient, and unoccupied voxels receive none.
    """
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 3)
    background = np.asarray(background, dtype=np.float64)
    res = _march_core(grid, origins, dirs, settings, background, record=True)
    err = res.rgb - targets
    loss = np.einsum("nc,nc->n", err, err)
    dC = 2.0 * err

    suffix = res.transmittance[:, None] * background  # color contributed after step i
    n_vox = grid.n_voxels
    corner_chunks = []
    scatter_chunks = []
    dsig_chunks = []
    dcoeff_chunks = []
    for rec in reversed(res.steps):
        idx = rec.ray_idx
        w_s = rec.trans_before * rec.gamma
        trans_after = rec.trans_before - w_s
        d_sigma = res.delta * np.einsum(
            "nc,nc->n", dC[idx], trans_after[:, None] * rec.color - suffix[idx])
        d_sigma = np.where(rec.sigma_raw >= 0.0, d_sigma, 0.0)
        d_pre = dC[idx] * w_s[:, None] * rec.color * (1.0 - rec.color)  # (A, 3)
        d_coeff = (d_pre[:, :, None] * res.basis[idx][:, None, :]).reshape(-1, N_SH)

        corner_chunks.append(rec.corners)
        scatter_chunks.append(rec.weights * rec.occ)
        dsig_chunks.append(d_sigma)
        dcoeff_chunks.append(d_coeff)
        suffix[idx] += w_s[:, None] * rec.color

    if not corner_chunks:
        empty = SparseGradients(indices=np.zeros(0, dtype=np.int64),
                                density=np.zeros(0), sh=np.zeros((0, N_SH)))
        return res.rgb, loss, (empty if sparse else empty.to_dense(grid.dims))

    from scipy.sparse import csr_matrix

    corners = np.concatenate(corner_chunks)  # (S, 8)
    scatter = np.concatenate(scatter_chunks)  # (S, 8)
    n_samples = corners.shape[0]
    uniq, inv = np.unique(corners.reshape(-1), return_inverse=True)
    sample_idx = np.repeat(np.arange(n_samples), 8)
    # sparse scatter matrix: (touched voxel, sample) holds trilinear weights
    m = csr_matrix((scatter.reshape(-1), (inv, sample_idx)),
                   shape=(uniq.size, n_samples))
    grad = SparseGradients(
        indices=uniq,
        density=np.asarray(m @ np.concatenate(dsig_chunks)),
        sh=np.asarray(m @ np.concatenate(dcoeff_chunks)))
    return res.rgb, loss, (grad if sparse else grad.to_dense(grid.dims))


def march_ray_with_grads(grid: VoxelGrid, ray: Ray, settings: RenderSettings,
                         target_rgb, background=WHITE):
    """Single-ray gradient march; returns (rgb, loss, GridGradients)."""
    rgb, loss, grad = march_batch_with_grads(
        grid, ray.origin, ray.direction, target_rgb, settings, background)
    return rgb[0], float(loss[0]), grad


# -- frame assembly ----------------------------------------------------------

def _worker_count() -> int:
    env = os.environ.get("VISTAFLOW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return os.cpu_count() or 1


def render_image(grid: VoxelGrid, intrinsics: CameraIntrinsics,
                 pose: CameraPose, settings: RenderSettings,
                 background=WHITE):
    """Render a full frame; returns (ImageBuffer, FrameStats).

    Rays are independent, so work is split into fixed-size chunks handed to a
    thread pool (capped by VISTAFLOW_THREADS); chunk boundaries never depend
    on the worker count, keeping output bit-identical for fixed inputs.
    """
    start = time.perf_counter()
    batch = generate_rays(intrinsics, pose, settings.rho)
    n = len(batch)
    rgb = np.empty((n, 3))
    meta = []

    def run_chunk(lo: int, hi: int):
        res = _march_core(grid, batch.origins[lo:hi], batch.directions[lo:hi],
                          settings, background)
        rgb[lo:hi] = res.rgb
        return (res.samples, res.early_terminated,
                int(np.count_nonzero(res.weight_sum > 1e-6)))

    bounds = [(lo, min(lo + _CHUNK, n)) for lo in range(0, n, _CHUNK)]
    workers = min(_worker_count(), len(bounds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            meta = list(pool.map(lambda b: run_chunk(*b), bounds))
    else:
        meta = [run_chunk(*b) for b in bounds]

    samples = sum(m[0] for m in meta)
    early = sum(m[1] for m in meta)
    absorbed = sum(m[2] for m in meta)
    elapsed_ms = max((time.perf_counter() - start) * 1000.0, 1e-3)
    image = ImageBuffer(width=batch.width, height=batch.height,
                        rgb=np.clip(rgb, 0.0, 1.0).reshape(batch.height,
                                                           batch.width, 3))
    stats = FrameStats(frame_time=elapsed_ms, rays=n, samples=samples,
                       early_terminated=early,
                       raster=(batch.width, batch.height),
                       occupied_fraction=absorbed / max(1, n))
    return image, stats
