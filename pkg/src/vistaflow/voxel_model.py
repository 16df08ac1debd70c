"""Sparse voxel grid scene model.

A scene is a dense-indexed, sparsely-occupied grid of voxels, each holding a
raw density value and 27 spherical-harmonic color coefficients (3 channels x
9 degree-2 basis functions). Values live at voxel centers; sampling between
centers is trilinear with edge clamping. Unoccupied voxels contribute zero
density and zero SH to any sample.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptModel, InvalidArgument, ResolutionLimit

SH_COEFFS = 9
SH_CHANNELS = 3
N_SH = SH_COEFFS * SH_CHANNELS

# Real spherical harmonic basis constants, degree <= 2.
SH_C0 = 0.282095
SH_C1 = 0.488603
SH_C2 = (1.092548, 1.092548, 0.315392, 1.092548, 0.546274)

MODEL_MAGIC = b"VFVX"
OCTREE_MAGIC = b"VFOC"
MODEL_VERSION = 1


def sh_basis(dirs: np.ndarray) -> np.ndarray:
    """Evaluate the 9 real SH basis functions for unit directions (..., 3)."""
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    out = np.empty(dirs.shape[:-1] + (SH_COEFFS,), dtype=np.float64)
    out[..., 0] = SH_C0
    out[..., 1] = -SH_C1 * y
    out[..., 2] = SH_C1 * z
    out[..., 3] = -SH_C1 * x
    out[..., 4] = SH_C2[0] * x * y
    out[..., 5] = -SH_C2[1] * y * z
    out[..., 6] = SH_C2[2] * (2.0 * z * z - x * x - y * y)
    out[..., 7] = -SH_C2[3] * x * z
    out[..., 8] = SH_C2[4] * (x * x - y * y)
    return out


def logistic(x: np.ndarray) -> np.ndarray:
    """Numerically stable elementwise logistic."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def eval_sh(sh: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """View-dependent color from 27 SH coefficients and a unit direction.

    Each channel is logistic(sum_m k[c,m] * Y_m(direction)), so the result
    always lies in (0, 1).
    """
    sh = np.asarray(sh, dtype=np.float64).reshape(SH_CHANNELS, SH_COEFFS)
    basis = sh_basis(np.asarray(direction, dtype=np.float64))
    return logistic(sh @ basis)


@dataclass
class SampledPoint:
    """Result of sampling the grid at one world-space point."""

    sigma: float
    sh: np.ndarray  # 27 interpolated coefficients


@dataclass
class PruneStats:
    """Per-voxel statistics gathered over training rays."""

    max_weight: np.ndarray  # max over rays of transmittance*alpha at samples
    max_density: np.ndarray


class VoxelGrid:
    """Dense-indexed voxel grid with density, SH color and occupancy.

    density: (Nx, Ny, Nz) float64, raw (may be negative; clamped at sampling)
    sh:      (Nx, Ny, Nz, 27) float64, layout channel-major (c*9 + m)
    occupancy: (Nx, Ny, Nz) bool
    """

    def __init__(self, dims, bbox_min, bbox_max, density=None, sh=None,
                 occupancy=None):
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or any(d < 2 for d in dims):
            raise InvalidArgument(f"grid dims must be >= 2 per axis, got {dims}")
        bbox_min = np.asarray(bbox_min, dtype=np.float64).reshape(3)
        bbox_max = np.asarray(bbox_max, dtype=np.float64).reshape(3)
        if not np.all(bbox_min < bbox_max):
            raise InvalidArgument("bbox min must be < max per axis")
        self.dims = dims
        self.bbox_min = bbox_min
        self.bbox_max = bbox_max
        n = dims[0] * dims[1] * dims[2]
        self.density = (np.zeros(dims) if density is None
                        else np.asarray(density, dtype=np.float64).reshape(dims))
        self.sh = (np.zeros(dims + (N_SH,)) if sh is None
                   else np.asarray(sh, dtype=np.float64).reshape(dims + (N_SH,)))
        self.occupancy = (np.ones(dims, dtype=bool) if occupancy is None
                          else np.asarray(occupancy, dtype=bool).reshape(dims))
        self._n_voxels = n

    @property
    def n_voxels(self) -> int:
        return self._n_voxels

    @property
    def voxel_size(self) -> np.ndarray:
        return (self.bbox_max - self.bbox_min) / np.asarray(self.dims)

    @property
    def voxel_diagonal(self) -> float:
        return float(np.linalg.norm(self.voxel_size))

    def copy(self) -> "VoxelGrid":
        return VoxelGrid(self.dims, self.bbox_min, self.bbox_max,
                         self.density.copy(), self.sh.copy(),
                         self.occupancy.copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return (self.dims == other.dims
                and np.array_equal(self.bbox_min, other.bbox_min)
                and np.array_equal(self.bbox_max, other.bbox_max)
                and np.array_equal(self.density, other.density)
                and np.array_equal(self.sh, other.sh)
                and np.array_equal(self.occupancy, other.occupancy))

    # -- sampling ---------------------------------------------------------

    def grid_coords(self, points: np.ndarray) -> np.ndarray:
        """World points (N, 3) -> continuous grid coordinates.

        Voxel centers sit at integer coordinates 0 .. dims-1.
        """
        return (points - self.bbox_min) / self.voxel_size - 0.5

    def interp_corners(self, points: np.ndarray):
        """Trilinear corner gather for world points (N, 3).

        Returns (lin, w, occ, inside):
          lin    (N, 8) int64 flat C-order voxel indices of the 8 corners
          w      (N, 8) trilinear weights (sum to 1)
          occ    (N, 8) occupancy factor 0/1 for each corner
          inside (N,)   bool, point within the bbox
        """
        points = np.asarray(points, dtype=np.float64)
        inside = np.all((points >= self.bbox_min) & (points <= self.bbox_max),
                        axis=-1)
        g = self.grid_coords(points)
        nx, ny, nz = self.dims
        hi = np.asarray(self.dims, dtype=np.float64) - 1.0
        gc = np.clip(g, 0.0, hi)
        i0 = np.minimum(np.floor(gc).astype(np.int64),
                        np.asarray(self.dims) - 2)
        f = gc - i0  # in [0, 1]

        fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
        wx = np.stack([1.0 - fx, fx], axis=-1)
        wy = np.stack([1.0 - fy, fy], axis=-1)
        wz = np.stack([1.0 - fz, fz], axis=-1)
        # corner order: bit2 = dx, bit1 = dy, bit0 = dz
        w = (wx[..., :, None, None] * wy[..., None, :, None]
             * wz[..., None, None, :]).reshape(points.shape[:-1] + (8,))

        ix = i0[..., 0:1] + np.array([0, 0, 0, 0, 1, 1, 1, 1])
        iy = i0[..., 1:2] + np.array([0, 0, 1, 1, 0, 0, 1, 1])
        iz = i0[..., 2:3] + np.array([0, 1, 0, 1, 0, 1, 0, 1])
        lin = (ix * ny + iy) * nz + iz
        occ = self.occupancy.reshape(-1)[lin].astype(np.float64)
        return lin, w, occ, inside

    def sample_batch(self, points: np.ndarray):
        """Vectorized sampling: returns (sigma (N,), sh (N, 27), sigma_raw (N,)).

        sigma is clamped to >= 0; sigma_raw is the unclamped interpolation,
        used by gradient code. Points outside the bbox sample as empty space.
        """
        lin, w, occ, inside = self.interp_corners(points)
        wocc = w * occ
        dens = self.density.reshape(-1)[lin]
        sigma_raw = np.einsum("nc,nc->n", dens, wocc)
        sh = self.sh.reshape(-1, N_SH)[lin]
        sh_out = np.einsum("ncd,nc->nd", sh, wocc)
        sigma_raw = np.where(inside, sigma_raw, 0.0)
        sh_out[~inside] = 0.0
        return np.maximum(sigma_raw, 0.0), sh_out, sigma_raw


def trilinear_sample(grid: VoxelGrid, p) -> SampledPoint:
    """Sample density and SH at a world-space point.

    Points outside the bbox return a zero sample (empty space).
    """
    sigma, sh, _ = grid.sample_batch(np.asarray(p, dtype=np.float64).reshape(1, 3))
    return SampledPoint(sigma=float(sigma[0]), sh=sh[0])


# -- pruning ---------------------------------------------------------------

def compute_prune_stats(grid: VoxelGrid, dataset, settings,
                        ray_stride: int = 1) -> PruneStats:
    """March training rays and record each voxel's maximum ray weight.

    The weight of a sample is transmittance * alpha; it is credited to all 8
    corner voxels of the sample's interpolation cell. ray_stride subsamples
    the pixel grid (stride in both axes) to bound cost.
    """
    from .scene_io import generate_rays  # deferred: scene_io imports this module
    from .volume_renderer import march_recorded

    if dataset is None or len(dataset.frames) == 0:
        raise InvalidArgument("compute_prune_stats needs a non-empty dataset")
    if ray_stride < 1:
        raise InvalidArgument("ray_stride must be >= 1")

    max_weight = np.zeros(grid.n_voxels)
    flat_density = (grid.density * grid.occupancy).reshape(-1)
    for pose, _img in dataset.frames:
        batch = generate_rays(dataset.intrinsics, pose, 1.0)
        w = batch.width
        sel = np.zeros(len(batch), dtype=bool).reshape(-1, w)
        sel[::ray_stride, ::ray_stride] = True
        sel = sel.reshape(-1)
        origins = batch.origins[sel]
        dirs = batch.directions[sel]
        for start in range(0, len(origins), 16384):
            res = march_recorded(grid, origins[start:start + 16384],
                                 dirs[start:start + 16384], settings)
            for rec in res.steps:
                contrib = rec.trans_before * rec.gamma
                np.maximum.at(max_weight, rec.corners.reshape(-1),
                              np.repeat(contrib, 8))
    return PruneStats(max_weight=max_weight.reshape(grid.dims),
                      max_density=flat_density.reshape(grid.dims).copy())


def prune(grid: VoxelGrid, stats: PruneStats, tau_weight: float,
          mode: str = "weight"):
    """Mark voxels unoccupied when they and all 26 neighbors are below threshold.

    The dilation rule protects surfaces: a voxel is only pruned if its whole
    27-voxel neighborhood falls below tau (neighborhoods are truncated at the
    grid boundary). Pruned voxels are zeroed. Returns (grid, count_pruned);
    the grid is modified in place.
    """
    from scipy.ndimage import minimum_filter

    if tau_weight < 0:
        raise InvalidArgument("tau_weight must be >= 0")
    if mode == "weight":
        metric = stats.max_weight
    elif mode == "density":
        metric = stats.max_density
    else:
        raise InvalidArgument(f"unknown prune mode {mode!r}")

    below = (metric < tau_weight).astype(np.uint8)
    # erosion: voxel prunable iff below everywhere in its 3x3x3 neighborhood
    prunable = minimum_filter(below, size=3, mode="constant", cval=1).astype(bool)
    doomed = prunable & grid.occupancy
    count = int(np.count_nonzero(doomed))
    grid.occupancy[doomed] = False
    grid.density[doomed] = 0.0
    grid.sh[doomed] = 0.0
    return grid, count


# -- subdivision -----------------------------------------------------------

def subdivide(grid: VoxelGrid, max_resolution: int = 1024) -> VoxelGrid:
    """Double the grid resolution along every axis.

    Child voxel centers are initialized by trilinear interpolation of the
    parent's raw values (occupancy-gated, no density clamp, so the sampled
    field is preserved wherever it was not clamped). A child is occupied iff
    its interpolation neighborhood touches an occupied parent voxel.
    """
    new_dims = tuple(2 * d for d in grid.dims)
    if max(new_dims) > max_resolution:
        raise ResolutionLimit(
            f"subdividing to {new_dims} exceeds max resolution {max_resolution}")

    child = VoxelGrid(new_dims, grid.bbox_min, grid.bbox_max)
    nx, ny, nz = new_dims
    # child center positions expressed in parent grid coordinates
    xs = (np.arange(nx) + 0.5) / 2.0 - 0.5
    ys = (np.arange(ny) + 0.5) / 2.0 - 0.5
    zs = (np.arange(nz) + 0.5) / 2.0 - 0.5
    pg = np.stack(np.meshgrid(xs, ys, zs, indexing="ij"), axis=-1).reshape(-1, 3)
    world = grid.bbox_min + (pg + 0.5) * grid.voxel_size

    dens = np.empty(nx * ny * nz)
    sh = np.empty((nx * ny * nz, N_SH))
    occ = np.empty(nx * ny * nz, dtype=bool)
    for start in range(0, world.shape[0], 1 << 18):
        pts = world[start:start + (1 << 18)]
        lin, w, o, _inside = grid.interp_corners(pts)
        wocc = w * o
        dens[start:start + len(pts)] = np.einsum(
            "nc,nc->n", grid.density.reshape(-1)[lin], wocc)
        sh[start:start + len(pts)] = np.einsum(
            "ncd,nc->nd", grid.sh.reshape(-1, N_SH)[lin], wocc)
        occ[start:start + len(pts)] = np.einsum("nc,nc->n", w > 1e-12, o) > 0
    child.density = dens.reshape(new_dims)
    child.sh = sh.reshape(new_dims + (N_SH,))
    child.occupancy = occ.reshape(new_dims)
    child.density[~child.occupancy] = 0.0
    child.sh[~child.occupancy] = 0.0
    return child


# -- octree export ---------------------------------------------------------

LEAF_FLAG = np.uint32(0x80000000)


@dataclass
class PlenOctree:
    """Octree over a padded power-of-two cube of the source grid.

    nodes: (K, 8) uint32 child references in octant order 4*dx + 2*dy + dz;
    a reference with the high bit set addresses a leaf (low 31 bits), else an
    internal node. Root is node 0, or leaf 0 when there are no nodes. Leaves
    store (density, 27 SH); fully unoccupied regions share one empty leaf.
    """

    bbox_min: np.ndarray
    bbox_max: np.ndarray
    nodes: np.ndarray  # (K, 8) uint32
    leaf_density: np.ndarray  # (L,) float32
    leaf_sh: np.ndarray  # (L, 27) float32
    max_depth: int = 0

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def n_leaves(self) -> int:
        return int(self.leaf_density.shape[0])

    def lookup(self, p) -> tuple[float, np.ndarray]:
        """Value of the leaf containing world point p (zeros outside bbox)."""
        p = np.asarray(p, dtype=np.float64)
        if np.any(p < self.bbox_min) or np.any(p > self.bbox_max):
            return 0.0, np.zeros(N_SH)
        lo = self.bbox_min.copy()
        hi = self.bbox_max.copy()
        if self.n_nodes == 0:
            return float(self.leaf_density[0]), self.leaf_sh[0].astype(np.float64)
        ref = np.uint32(0)
        is_leaf = False
        node = 0
        while not is_leaf:
            center = 0.5 * (lo + hi)
            oct_bits = [1 if p[a] >= center[a] else 0 for a in range(3)]
            child = 4 * oct_bits[0] + 2 * oct_bits[1] + oct_bits[2]
            for a in range(3):
                if oct_bits[a]:
                    lo[a] = center[a]
                else:
                    hi[a] = center[a]
            ref = self.nodes[node, child]
            if ref & LEAF_FLAG:
                is_leaf = True
            else:
                node = int(ref)
        leaf = int(ref & ~LEAF_FLAG)
        return float(self.leaf_density[leaf]), self.leaf_sh[leaf].astype(np.float64)


def to_octree(grid: VoxelGrid) -> PlenOctree:
    """Convert a grid to an octree, padding dims up to a power-of-two cube.

    Padding voxels are unoccupied; the octree bbox is expanded accordingly so
    voxel size is preserved and lookups inside the original bbox reproduce
    the grid's containing-voxel values exactly.
    """
    n = 1
    while n < max(grid.dims):
        n *= 2
    vs = grid.voxel_size
    bbox_max = grid.bbox_min + vs * n

    occ = np.zeros((n, n, n), dtype=bool)
    occ[:grid.dims[0], :grid.dims[1], :grid.dims[2]] = grid.occupancy
    dens = np.zeros((n, n, n), dtype=np.float32)
    dens[:grid.dims[0], :grid.dims[1], :grid.dims[2]] = (
        grid.density * grid.occupancy).astype(np.float32)
    sh = np.zeros((n, n, n, N_SH), dtype=np.float32)
    sh[:grid.dims[0], :grid.dims[1], :grid.dims[2]] = (
        grid.sh * grid.occupancy[..., None]).astype(np.float32)

    nodes: list[np.ndarray] = []
    leaf_density: list[float] = []
    leaf_sh: list[np.ndarray] = []
    empty_leaf = [-1]  # lazily created shared empty leaf

    def leaf_ref(idx: int) -> np.uint32:
        return np.uint32(idx) | LEAF_FLAG

    def make_empty_leaf() -> np.uint32:
        if empty_leaf[0] < 0:
            empty_leaf[0] = len(leaf_density)
            leaf_density.append(0.0)
            leaf_sh.append(np.zeros(N_SH, dtype=np.float32))
        return leaf_ref(empty_leaf[0])

    def build(x0: int, y0: int, z0: int, size: int) -> np.uint32:
        region = occ[x0:x0 + size, y0:y0 + size, z0:z0 + size]
        if not region.any():
            return make_empty_leaf()
        if size == 1:
            idx = len(leaf_density)
            leaf_density.append(float(dens[x0, y0, z0]))
            leaf_sh.append(sh[x0, y0, z0].copy())
            return leaf_ref(idx)
        node_idx = len(nodes)
        nodes.append(np.zeros(8, dtype=np.uint32))
        half = size // 2
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    ref = build(x0 + dx * half, y0 + dy * half,
                                z0 + dz * half, half)
                    nodes[node_idx][4 * dx + 2 * dy + dz] = ref
        return np.uint32(node_idx)

    if not occ.any():
        make_empty_leaf()
        node_arr = np.zeros((0, 8), dtype=np.uint32)
    else:
        build(0, 0, 0, n)
        node_arr = np.stack(nodes) if nodes else np.zeros((0, 8), dtype=np.uint32)

    return PlenOctree(
        bbox_min=grid.bbox_min.copy(), bbox_max=bbox_max,
        nodes=node_arr,
        leaf_density=np.asarray(leaf_density, dtype=np.float32),
        leaf_sh=(np.stack(leaf_sh).astype(np.float32) if leaf_sh
                 else np.zeros((0, N_SH), dtype=np.float32)),
        max_depth=int(np.log2(n)) if n > 1 else 0,
    )


# -- serialization ---------------------------------------------------------
# Grid file ("VFVX", little-endian): magic, version u32, bbox 6xf64
# (min xyz then max xyz), dims 3xu32, sh_degree u32, occupancy bitmap
# ceil(N/8) bytes in x-fastest voxel order (bit k of byte j = voxel 8j+k),
# then f32 density + 27xf32 SH per occupied voxel in the same order.
# Octree file ("VFOC"): magic, version u32, bbox 6xf64, node count u32,
# leaf count u32, nodes as 8xu32 child refs (high bit = leaf), leaves as
# f32 density + 27xf32 SH.


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise CorruptModel("model file is truncated")
    return buf


def _save_grid(grid: VoxelGrid, f) -> None:
    f.write(MODEL_MAGIC)
    f.write(struct.pack("<I", MODEL_VERSION))
    f.write(np.concatenate([grid.bbox_min, grid.bbox_max]).astype("<f8").tobytes())
    f.write(struct.pack("<3I", *grid.dims))
    f.write(struct.pack("<I", 2))
    occ_f = grid.occupancy.ravel(order="F")
    f.write(np.packbits(occ_f, bitorder="little").tobytes())
    dens_f = grid.density.ravel(order="F")[occ_f].astype("<f4")
    nx, ny, nz = grid.dims
    sh_f = grid.sh.transpose(2, 1, 0, 3).reshape(-1, N_SH)[occ_f].astype("<f4")
    inter = np.empty((dens_f.shape[0], 1 + N_SH), dtype="<f4")
    inter[:, 0] = dens_f
    inter[:, 1:] = sh_f
    f.write(inter.tobytes())


def _load_grid(f) -> VoxelGrid:
    version = struct.unpack("<I", _read_exact(f, 4))[0]
    if version != MODEL_VERSION:
        raise CorruptModel(f"unsupported model version {version}")
    bbox = np.frombuffer(_read_exact(f, 48), dtype="<f8")
    dims = struct.unpack("<3I", _read_exact(f, 12))
    sh_degree = struct.unpack("<I", _read_exact(f, 4))[0]
    if sh_degree != 2:
        raise CorruptModel(f"unsupported SH degree {sh_degree}")
    n = dims[0] * dims[1] * dims[2]
    nbytes = (n + 7) // 8
    occ_f = np.unpackbits(
        np.frombuffer(_read_exact(f, nbytes), dtype=np.uint8),
        bitorder="little")[:n].astype(bool)
    n_occ = int(np.count_nonzero(occ_f))
    inter = np.frombuffer(_read_exact(f, n_occ * (1 + N_SH) * 4),
                          dtype="<f4").reshape(n_occ, 1 + N_SH)
    if f.read(1):
        raise CorruptModel("trailing bytes after model payload")
    dens_f = np.zeros(n)
    dens_f[occ_f] = inter[:, 0].astype(np.float64)
    sh_f = np.zeros((n, N_SH))
    sh_f[occ_f] = inter[:, 1:].astype(np.float64)
    nx, ny, nz = dims
    density = dens_f.reshape((nz, ny, nx)).transpose(2, 1, 0)
    sh = sh_f.reshape((nz, ny, nx, N_SH)).transpose(2, 1, 0, 3)
    occ = occ_f.reshape((nz, ny, nx)).transpose(2, 1, 0)
    return VoxelGrid(dims, bbox[:3], bbox[3:], density, sh, occ)


def _save_octree(tree: PlenOctree, f) -> None:
    f.write(OCTREE_MAGIC)
    f.write(struct.pack("<I", MODEL_VERSION))
    f.write(np.concatenate([tree.bbox_min, tree.bbox_max]).astype("<f8").tobytes())
    f.write(struct.pack("<II", tree.n_nodes, tree.n_leaves))
    f.write(tree.nodes.astype("<u4").tobytes())
    inter = np.empty((tree.n_leaves, 1 + N_SH), dtype="<f4")
    inter[:, 0] = tree.leaf_density
    inter[:, 1:] = tree.leaf_sh
    f.write(inter.tobytes())


def _load_octree(f) -> PlenOctree:
    version = struct.unpack("<I", _read_exact(f, 4))[0]
    if version != MODEL_VERSION:
        raise CorruptModel(f"unsupported octree version {version}")
    bbox = np.frombuffer(_read_exact(f, 48), dtype="<f8")
    n_nodes, n_leaves = struct.unpack("<II", _read_exact(f, 8))
    nodes = np.frombuffer(_read_exact(f, n_nodes * 32),
                          dtype="<u4").reshape(n_nodes, 8).copy()
    inter = np.frombuffer(_read_exact(f, n_leaves * (1 + N_SH) * 4),
                          dtype="<f4").reshape(n_leaves, 1 + N_SH)
    if f.read(1):
        raise CorruptModel("trailing bytes after octree payload")
    return PlenOctree(bbox_min=bbox[:3].copy(), bbox_max=bbox[3:].copy(),
                      nodes=nodes, leaf_density=inter[:, 0].copy(),
                      leaf_sh=inter[:, 1:].copy())


def save_model(model, path) -> None:
    """Write a VoxelGrid or PlenOctree to a model file."""
    with open(path, "wb") as f:
        if isinstance(model, VoxelGrid):
            _save_grid(model, f)
        elif isinstance(model, PlenOctree):
            _save_octree(model, f)
        else:
            raise InvalidArgument(f"cannot save {type(model).__name__}")


def load_model(path):
    """Read a model file; returns a VoxelGrid or PlenOctree by magic."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic == MODEL_MAGIC:
            return _load_grid(f)
        if magic == OCTREE_MAGIC:
            return _load_octree(f)
        raise CorruptModel(f"bad magic {magic!r}")
