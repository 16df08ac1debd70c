"""Command-line entry points: train, render, benchmark, quiq-train, serve."""

from __future__ import annotations

import os
import sys

import click
import numpy as np

from . import __version__
from .errors import VistaflowError
from .metrics import fps_stats
from .profiles import extract_profile, load_profile_library, save_profile
from .quiq import (DEFAULT_TIERS, N_TIERS, load_qtable, run_benchmark,
                   save_qtable, train_quiq)
from .scene_io import (CameraIntrinsics, CameraPose, OrbitTrajectory,
                       load_dataset, make_procedural_dataset, write_png)
from .serve import VistaflowServer
from .trainer import TrainConfig, evaluate_views_psnr, train
from .voxel_model import VoxelGrid, load_model, save_model
from .volume_renderer import render_image

PROCEDURAL_PREFIX = "@procedural:"


def _load_data(data: str):
    """Dataset from a directory or an @procedural:<kind> pseudo-path.

    Returns (dataset, bbox) where bbox is the training bounds to use.
    """
    if data.startswith(PROCEDURAL_PREFIX):
        kind = data[len(PROCEDURAL_PREFIX):]
        dataset, grid = make_procedural_dataset(kind)
        return dataset, (tuple(grid.bbox_min), tuple(grid.bbox_max))
    dataset = load_dataset(data, "train")
    return dataset, ((-1.3, -1.3, -1.3), (1.3, 1.3, 1.3))


def _load_grid_model(path) -> VoxelGrid:
    model = load_model(path)
    if not isinstance(model, VoxelGrid):
        raise VistaflowError(
            f"{path} holds an octree; rendering needs a grid model")
    return model


@click.group()
@click.version_option(__version__)
def main():
    """Sparse voxel radiance fields with adaptive-quality rendering."""


@main.command(name="train")
@click.option("--data", required=True,
              help="dataset directory or @procedural:<kind>")
@click.option("--out", required=True, type=click.Path(), help="output model file")
@click.option("--start-res", default=None, type=int, help="starting grid resolution")
@click.option("--subdivs", default=None, type=int, help="number of subdivisions")
@click.option("--iters", default=None, type=int, help="iterations per stage")
@click.option("--batch-size", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--log", "log_path", default=None, type=click.Path(),
              help="training log path (default: <out>.log)")
def cmd_train(data, out, start_res, subdivs, iters, batch_size, seed, log_path):
    """Optimize a voxel grid from posed images and write the model file."""
    try:
        dataset, bbox = _load_data(data)
        overrides = {}
        if data.startswith(PROCEDURAL_PREFIX):
            overrides = {"start_resolution": 32, "iterations": 300,
                         "subdivisions": 0}
        if start_res is not None:
            overrides["start_resolution"] = start_res
        if subdivs is not None:
            overrides["subdivisions"] = subdivs
        if iters is not None:
            overrides["iterations"] = iters
        if batch_size is not None:
            overrides["batch_size"] = batch_size
        if seed is not None:
            overrides["seed"] = seed
        config = TrainConfig(bbox_min=bbox[0], bbox_max=bbox[1], **overrides)
        grid, report = train(dataset, config)
        save_model(grid, out)
        log_path = log_path or out + ".log"
        with open(log_path, "w") as f:
            f.write("\n".join(report.log_lines()) + "\n")
        final_psnr = evaluate_views_psnr(grid, dataset)
        click.echo(report.text_table())
        click.echo(f"train-view psnr {final_psnr:.2f} dB")
        click.echo(f"model written to {out}")
    except VistaflowError as e:
        raise click.ClickException(str(e))


def _parse_pose(text: str) -> CameraPose:
    vals = [float(v) for v in text.replace(",", " ").split()]
    if len(vals) != 16:
        raise click.BadParameter("--pose needs 16 numbers (row-major 4x4)")
    return CameraPose(np.asarray(vals).reshape(4, 4))


@main.command(name="render")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True))
@click.option("--pose", default=None, help="16 floats, row-major camera-to-world")
@click.option("--trajectory", default=None, type=click.Choice(["orbit"]))
@click.option("--frames", default=60, type=int, help="frames along the trajectory")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--tier", default=N_TIERS - 1, type=click.IntRange(0, N_TIERS - 1))
@click.option("--width", default=400, type=int)
@click.option("--height", default=400, type=int)
def cmd_render(model_path, pose, trajectory, frames, out_dir, tier, width,
               height):
    """Render pose(s) from a model to PNG files, printing per-frame stats."""
    if (pose is None) == (trajectory is None):
        raise click.UsageError("pass exactly one of --pose or --trajectory")
    try:
        grid = _load_grid_model(model_path)
        intr = CameraIntrinsics.from_fov_x(width, height, 0.6911112)
        settings = DEFAULT_TIERS.settings(tier)
        os.makedirs(out_dir, exist_ok=True)
        if pose is not None:
            poses = [(0, _parse_pose(pose))]
        else:
            half = 0.5 * (grid.bbox_max - grid.bbox_min)
            orbit = OrbitTrajectory(center=grid.bbox_min + half,
                                    radius=2.2 * float(np.linalg.norm(half)))
            poses = [(i, orbit.pose_at(10.0 * i / max(1, frames)))
                     for i in range(frames)]
        for i, p in poses:
            image, stats = render_image(grid, intr, p, settings)
            path = os.path.join(out_dir, f"frame_{i:05d}.png")
            write_png(path, image)
            click.echo(f"frame {i} {stats.raster[0]}x{stats.raster[1]} "
                       f"time_ms {stats.frame_time:.2f} rays {stats.rays} "
                       f"samples {stats.samples} early {stats.early_terminated}")
    except VistaflowError as e:
        raise click.ClickException(str(e))


@main.command(name="benchmark")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True))
@click.option("--seconds", default=25.0, type=float)
@click.option("--profile-out", required=True, type=click.Path())
@click.option("--label", default="local", help="machine label for the profile")
def cmd_benchmark(model_path, seconds, profile_out, label):
    """Benchmark all quality tiers and write a vfprofile file."""
    if seconds < 5:
        raise click.UsageError("--seconds must be at least 5")
    try:
        grid = _load_grid_model(model_path)
        telemetry = run_benchmark(grid, seconds)
        profile = extract_profile(telemetry, machine=label)
        save_profile(profile_out, profile, telemetry)
        for t in range(N_TIERS):
            tier_recs = [r for r in telemetry if r.settings.tier == t]
            st = fps_stats(tier_recs)
            click.echo(f"tier {t} frames {len(tier_recs)} "
                       f"mean_fps {st.mean_fps:.2f} median_fps "
                       f"{st.median_fps:.2f} p10_fps {st.p10_fps:.2f} "
                       f"cv {st.frame_time_cv:.3f}")
        click.echo(f"profile written to {profile_out}")
    except VistaflowError as e:
        raise click.ClickException(str(e))


@main.command(name="quiq-train")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True))
@click.option("--mode", default="dedicated",
              type=click.Choice(["dedicated", "async"]))
@click.option("--seconds", default=60.0, type=float)
@click.option("--target-fps", default=30.0, type=float)
@click.option("--profiles", "profile_dir", default=None, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", default=0, type=int)
def cmd_quiq_train(model_path, mode, seconds, target_fps, profile_dir,
                   out_path, seed):
    """Train the pacing controller and write the Q-table file."""
    try:
        grid = _load_grid_model(model_path)
        library = []
        if profile_dir:
            library = load_profile_library(profile_dir)
            if not library:
                click.echo(f"warning: no profiles under {profile_dir}; "
                           "falling back to self-collected telemetry",
                           err=True)
        qtable = train_quiq(grid, mode=mode, budget_s=seconds,
                            target_fps=target_fps, profile_library=library,
                            seed=seed)
        save_qtable(out_path, qtable)
        click.echo(f"qtable written to {out_path}")
    except VistaflowError as e:
        raise click.ClickException(str(e))


@main.command(name="serve")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True))
@click.option("--port", default=8765, type=int)
@click.option("--host", default="127.0.0.1")
@click.option("--qtable", "qtable_path", default=None, type=click.Path())
@click.option("--target-fps", default=30.0, type=float)
@click.option("--no-quiq", is_flag=True, default=False)
@click.option("--width", default=256, type=int)
@click.option("--height", default=256, type=int)
def cmd_serve(model_path, port, host, qtable_path, target_fps, no_quiq, width,
              height):
    """Stream rendered frames to an interactive viewer over a websocket."""
    try:
        grid = _load_grid_model(model_path)
        qtable = load_qtable(qtable_path) if qtable_path else None
        server = VistaflowServer(
            grid, host=host, port=port, qtable=qtable, target_fps=target_fps,
            quiq=not no_quiq,
            intrinsics=CameraIntrinsics.from_fov_x(width, height, 0.6911112))
        click.echo(f"serving on ws://{host}:{port}")
        server.serve_forever()
    except OSError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    except VistaflowError as e:
        raise click.ClickException(str(e))


if __name__ == "__main__":
    main()
