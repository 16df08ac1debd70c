"""Posed-image dataset IO, camera rays, and procedural test scenes.

Datasets follow the common synthetic-scene layout: a directory holding
``transforms_<split>.json`` (horizontal field of view plus one 4x4
camera-to-world matrix per frame, OpenGL/Blender convention: camera looks
along -Z, +Y up) and the referenced PNG images. Images with an alpha channel
are composited over a white background at load time.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import (DatasetNotFound, InconsistentDataset, InvalidArgument,
                     InvalidPose, InvalidSettings)
from .voxel_model import N_SH, SH_C0, VoxelGrid


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; focal in pixels, derived from horizontal FOV."""

    width: int
    height: int
    focal: float

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidArgument("image dimensions must be >= 1")
        if not self.focal > 0:
            raise InvalidArgument("focal length must be > 0")

    @classmethod
    def from_fov_x(cls, width: int, height: int, camera_angle_x: float):
        return cls(width, height, 0.5 * width / math.tan(0.5 * camera_angle_x))


class CameraPose:
    """Rigid camera-to-world transform (4x4)."""

    def __init__(self, camera_to_world):
        m = np.asarray(camera_to_world, dtype=np.float64).reshape(4, 4)
        r = m[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-5):
            raise InvalidPose("rotation block is not orthonormal")
        if np.linalg.det(r) < 0:
            raise InvalidPose("rotation block has negative determinant")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-7):
            raise InvalidPose("bottom row must be (0, 0, 0, 1)")
        m.setflags(write=False)
        self.matrix = m

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def position(self) -> np.ndarray:
        return self.matrix[:3, 3]

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix)


@dataclass(frozen=True)
class Ray:
    """Single world-space ray with unit direction."""

    origin: np.ndarray
    direction: np.ndarray


@dataclass
class RayBatch:
    """Rays for one raster, row-major pixel order.

    pixels holds (u, v) raster coordinates of each ray at the batch's own
    (possibly downscaled) resolution.
    """

    origins: np.ndarray  # (N, 3)
    directions: np.ndarray  # (N, 3), unit length
    pixels: np.ndarray  # (N, 2) int
    width: int
    height: int

    def __len__(self) -> int:
        return self.origins.shape[0]

    def __getitem__(self, i: int) -> Ray:
        return Ray(self.origins[i], self.directions[i])


@dataclass
class ImageBuffer:
    """RGB image with channel values in [0, 1], stored (height, width, 3)."""

    width: int
    height: int
    rgb: np.ndarray

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float64).reshape(
            self.height, self.width, 3)
        if self.rgb.min() < 0.0 or self.rgb.max() > 1.0:
            raise InvalidArgument("channel values must lie in [0, 1]")


@dataclass
class Dataset:
    """Posed frames sharing one set of intrinsics."""

    intrinsics: CameraIntrinsics
    frames: list  # of (CameraPose, ImageBuffer)
    split: str = "train"

    @property
    def n_pixels(self) -> int:
        return len(self.frames) * self.intrinsics.width * self.intrinsics.height


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def generate_rays(intrinsics: CameraIntrinsics, pose: CameraPose,
                  rho: float = 1.0) -> RayBatch:
    """One ray per output pixel at resolution scale rho, row-major order.

    The raster is (round(rho*width) x round(rho*height)); each ray passes
    through its pixel's center, mapped back onto the full-resolution image
    plane so low-rho rasters stay aligned with the full image.
    """
    if not (0.0 < rho <= 1.0):
        raise InvalidSettings(f"resolution scale must be in (0, 1], got {rho}")
    w = max(1, _round_half_up(rho * intrinsics.width))
    h = max(1, _round_half_up(rho * intrinsics.height))
    u = np.arange(w, dtype=np.float64)
    v = np.arange(h, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)  # row-major: v slow, u fast
    px = (uu + 0.5) * (intrinsics.width / w)
    py = (vv + 0.5) * (intrinsics.height / h)
    dirs_cam = np.stack([
        (px - 0.5 * intrinsics.width) / intrinsics.focal,
        -(py - 0.5 * intrinsics.height) / intrinsics.focal,
        -np.ones_like(px),
    ], axis=-1).reshape(-1, 3)
    dirs = dirs_cam @ pose.rotation.T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(pose.position, dirs.shape).copy()
    pixels = np.stack([uu, vv], axis=-1).reshape(-1, 2).astype(np.int64)
    return RayBatch(origins=origins, directions=dirs, pixels=pixels,
                    width=w, height=h)


# -- dataset loading -------------------------------------------------------

def _composite_white(arr: np.ndarray) -> np.ndarray:
    """uint8 RGB(A) array -> float RGB in [0,1], alpha over white."""
    arr = arr.astype(np.float64) / 255.0
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.shape[2] == 4:
        alpha = arr[:, :, 3:4]
        arr = arr[:, :, :3] * alpha + (1.0 - alpha)
    return arr[:, :, :3]


def read_png(path) -> ImageBuffer:
    with Image.open(path) as im:
        arr = np.asarray(im)
    rgb = _composite_white(arr)
    return ImageBuffer(width=rgb.shape[1], height=rgb.shape[0], rgb=rgb)


def write_png(path, image: ImageBuffer) -> None:
    arr = np.clip(image.rgb * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def load_dataset(root_path, split: str = "train") -> Dataset:
    """Load a posed-image dataset from a transforms manifest.

    Raises DatasetNotFound when the manifest is missing, InconsistentDataset
    when the frame list is empty or image sizes disagree, and InvalidPose
    when a transform is not rigid.
    """
    manifest = os.path.join(root_path, f"transforms_{split}.json")
    if not os.path.isfile(manifest):
        raise DatasetNotFound(f"no manifest at {manifest}")
    with open(manifest) as f:
        meta = json.load(f)
    entries = meta.get("frames", [])
    if not entries:
        raise InconsistentDataset("manifest has no frames")

    frames = []
    size = None
    for entry in entries:
        rel = entry["file_path"]
        img_path = os.path.join(root_path, rel)
        if not os.path.isfile(img_path):
            img_path = img_path + ".png"
        if not os.path.isfile(img_path):
            raise DatasetNotFound(f"image not found for frame {rel!r}")
        image = read_png(img_path)
        if size is None:
            size = (image.width, image.height)
        elif (image.width, image.height) != size:
            raise InconsistentDataset(
                f"frame {rel!r} is {image.width}x{image.height}, "
                f"expected {size[0]}x{size[1]}")
        pose = CameraPose(entry["transform_matrix"])
        frames.append((pose, image))

    intr = CameraIntrinsics.from_fov_x(size[0], size[1],
                                       float(meta["camera_angle_x"]))
    return Dataset(intrinsics=intr, frames=frames, split=split)


def save_transforms(root_path, dataset: Dataset) -> None:
    """Write a dataset back out as manifest + PNGs (used by tooling/tests)."""
    os.makedirs(os.path.join(root_path, dataset.split), exist_ok=True)
    angle = 2.0 * math.atan(0.5 * dataset.intrinsics.width
                            / dataset.intrinsics.focal)
    entries = []
    for i, (pose, image) in enumerate(dataset.frames):
        rel = f"./{dataset.split}/r_{i}"
        write_png(os.path.join(root_path, rel + ".png"), image)
        entries.append({"file_path": rel,
                        "transform_matrix": pose.matrix.tolist()})
    with open(os.path.join(root_path, f"transforms_{dataset.split}.json"),
              "w") as f:
        json.dump({"camera_angle_x": angle, "frames": entries}, f, indent=1)


# -- procedural scenes -----------------------------------------------------

PROCEDURAL_KINDS = ("sphere", "two_blobs", "checker")


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def _albedo_sh(rgb) -> np.ndarray:
    """Direction-independent SH coefficients producing the given albedo."""
    sh = np.zeros(N_SH)
    for c in range(3):
        sh[c * 9] = _logit(rgb[c]) / SH_C0
    return sh


def make_procedural_scene(kind: str, resolution) -> VoxelGrid:
    """Deterministic synthetic scene used as a reconstruction ground truth.

    The bbox is [-0.5, 0.5]^3. `sphere` holds density 50 inside radius 0.35
    of the center with albedo (0.8, 0.3, 0.3); `two_blobs` is a pair of
    colored spheres; `checker` is an alternating pattern of solid cells.
    """
    if isinstance(resolution, int):
        resolution = (resolution,) * 3
    resolution = tuple(int(r) for r in resolution)
    if any(r < 4 for r in resolution):
        raise InvalidArgument("procedural scenes need resolution >= 4 per axis")
    if kind not in PROCEDURAL_KINDS:
        raise InvalidArgument(f"unknown procedural scene {kind!r}")

    grid = VoxelGrid(resolution, (-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))
    centers = [grid.bbox_min[a] + (np.arange(n) + 0.5) * grid.voxel_size[a]
               for a, n in enumerate(resolution)]
    x, y, z = np.meshgrid(*centers, indexing="ij")

    if kind == "sphere":
        inside = x * x + y * y + z * z <= 0.35 ** 2
        grid.density[inside] = 50.0
        grid.sh[:] = _albedo_sh((0.8, 0.3, 0.3))
    elif kind == "two_blobs":
        ca = np.array([-0.18, 0.0, -0.02])
        cb = np.array([0.2, 0.05, 0.1])
        da = (x - ca[0]) ** 2 + (y - ca[1]) ** 2 + (z - ca[2]) ** 2
        db = (x - cb[0]) ** 2 + (y - cb[1]) ** 2 + (z - cb[2]) ** 2
        grid.density[da <= 0.22 ** 2] = 40.0
        grid.density[db <= 0.18 ** 2] = 60.0
        sh_a = _albedo_sh((0.2, 0.4, 0.85))
        sh_b = _albedo_sh((0.9, 0.75, 0.2))
        grid.sh[:] = np.where((da <= db)[..., None], sh_a, sh_b)
    else:  # checker
        cell = max(1, min(resolution) // 4)
        parity = ((x * 0).astype(np.int64)
                  + (np.arange(resolution[0])[:, None, None] // cell)
                  + (np.arange(resolution[1])[None, :, None] // cell)
                  + (np.arange(resolution[2])[None, None, :] // cell)) % 2
        grid.density[parity == 0] = 30.0
        sh_w = _albedo_sh((0.85, 0.85, 0.85))
        sh_r = _albedo_sh((0.75, 0.2, 0.2))
        grid.sh[:] = np.where((parity == 0)[..., None], sh_r, sh_w)
    return grid


# -- cameras and trajectories ----------------------------------------------

def look_at_pose(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> CameraPose:
    """Camera-to-world pose at `eye` looking at `target` (-Z forward)."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    zc = eye - target
    nz = np.linalg.norm(zc)
    if nz < 1e-12:
        raise InvalidArgument("eye and target coincide")
    zc = zc / nz
    xc = np.cross(up, zc)
    nx = np.linalg.norm(xc)
    if nx < 1e-9:  # looking straight along up: pick a stable right vector
        xc = np.cross(np.array([0.0, 1.0, 0.0]), zc)
        nx = np.linalg.norm(xc)
    xc = xc / nx
    yc = np.cross(zc, xc)
    m = np.eye(4)
    m[:3, 0] = xc
    m[:3, 1] = yc
    m[:3, 2] = zc
    m[:3, 3] = eye
    return CameraPose(m)


class OrbitTrajectory:
    """Deterministic benchmark camera path.

    Repeats a 15 s cycle: a full 360-degree orbit at fixed elevation over
    the first 10 s, then a 5 s dolly-in toward the target. pose_at(t) is
    defined for all t >= 0.
    """

    def __init__(self, center=(0.0, 0.0, 0.0), radius: float = 1.5,
                 elevation_deg: float = 25.0):
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = float(radius)
        self.elevation = math.radians(elevation_deg)

    def pose_at(self, t: float) -> CameraPose:
        phase = t % 15.0
        if phase < 10.0:
            az = 2.0 * math.pi * phase / 10.0
            r = self.radius
        else:
            az = 0.0
            r = self.radius * (1.0 - 0.45 * (phase - 10.0) / 5.0)
        eye = self.center + r * np.array([
            math.cos(az) * math.cos(self.elevation),
            math.sin(az) * math.cos(self.elevation),
            math.sin(self.elevation),
        ])
        return look_at_pose(eye, self.center)


def hemisphere_poses(n_views: int, radius: float = 1.5,
                     center=(0.0, 0.0, 0.0)) -> list[CameraPose]:
    """Deterministic spread of inward-looking poses on the upper hemisphere."""
    poses = []
    golden = math.pi * (3.0 - math.sqrt(5.0))
    for i in range(n_views):
        el = math.radians(10.0 + 50.0 * (i / max(1, n_views - 1)))
        az = i * golden
        eye = np.asarray(center) + radius * np.array([
            math.cos(az) * math.cos(el),
            math.sin(az) * math.cos(el),
            math.sin(el),
        ])
        poses.append(look_at_pose(eye, center))
    return poses


def make_procedural_dataset(kind: str, n_views: int = 20, image_size: int = 64,
                            grid_resolution: int = 32,
                            fov_x: float = 0.6911112):
    """Render ground-truth views of a procedural scene.

    Returns (dataset, generating_grid). Deterministic: poses come from a
    fixed hemisphere spread and rendering uses the highest-quality settings.
    """
    from .volume_renderer import RenderSettings, render_image

    grid = make_procedural_scene(kind, grid_resolution)
    intr = CameraIntrinsics.from_fov_x(image_size, image_size, fov_x)
    settings = RenderSettings(delta_scale=1.0, gamma=1e-6, rho=1.0, tier=7)
    frames = []
    for pose in hemisphere_poses(n_views):
        image, _stats = render_image(grid, intr, pose, settings)
        frames.append((pose, image))
    return Dataset(intrinsics=intr, frames=frames, split="train"), grid
