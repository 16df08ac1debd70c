import asyncio
import json
import os
import struct

import numpy as np
import pytest
from click.testing import CliRunner

from vistaflow.cli import main
from vistaflow.errors import CorruptModel
from vistaflow.scene_io import CameraIntrinsics, ImageBuffer, look_at_pose, make_procedural_scene
from vistaflow.serve import FRAME_HEADER, VistaflowServer, decode_frame, encode_frame
from vistaflow.voxel_model import save_model


@pytest.fixture(scope="module")
def sphere_model(tmp_path_factory):
    path = tmp_path_factory.mktemp("models") / "sphere.vfvx"
    grid = make_procedural_scene("sphere", 16)
    save_model(grid, path)
    return str(path)


class TestWireFormat:
    def test_frame_round_trip(self, rng):
        rgb = np.round(rng.random((12, 10, 3)) * 255) / 255.0
        img = ImageBuffer(width=10, height=12, rgb=rgb)
        data = encode_frame(seq=42, image=img, tier=5, frame_time_ms=16.5,
                           fps_ema=59.5)
        meta, pixels = decode_frame(data)
        assert meta["seq"] == 42
        assert meta["width"] == 10
        assert meta["height"] == 12
        assert meta["tier"] == 5
        assert meta["format"] == 0
        assert meta["frame_time_ms"] == pytest.approx(16.5, abs=1e-6)
        assert meta["fps_ema"] == pytest.approx(59.5, abs=1e-6)
        assert np.array_equal(pixels, np.round(rgb * 255).astype(np.uint8))

    def test_header_layout(self):
        img = ImageBuffer(width=2, height=1, rgb=np.zeros((1, 2, 3)))
        data = encode_frame(1, img, 0, 1.0, 2.0)
        assert data[:4] == b"VFRM"
        assert len(data) == FRAME_HEADER.size + 2 * 1 * 3
        seq, w, h = struct.unpack_from("<IHH", data, 4)
        assert (seq, w, h) == (1, 2, 1)

    def test_bad_magic_rejected(self):
        with pytest.raises(CorruptModel):
            decode_frame(b"XXXX" + b"\x00" * 40)

    def test_truncated_rejected(self):
        img = ImageBuffer(width=2, height=2, rgb=np.zeros((2, 2, 3)))
        data = encode_frame(1, img, 0, 1.0, 2.0)
        with pytest.raises(CorruptModel):
            decode_frame(data[:-1])


class TestCli:
    def test_help_exits_zero(self):
        runner = CliRunner()
        for cmd in ([], ["train"], ["render"], ["benchmark"], ["quiq-train"],
                    ["serve"]):
            result = runner.invoke(main, cmd + ["--help"])
            assert result.exit_code == 0
            assert "Usage" in result.output

    def test_train_missing_data_is_usage_error(self):
        result = CliRunner().invoke(main, ["train", "--out", "x.vfvx"])
        assert result.exit_code == 2

    def test_train_procedural_zero_iters(self, tmp_path):
        out = tmp_path / "model.vfvx"
        result = CliRunner().invoke(main, [
            "train", "--data", "@procedural:sphere", "--out", str(out),
            "--iters", "0", "--start-res", "16"])
        assert result.exit_code == 0, result.output
        assert out.exists()
        assert (tmp_path / "model.vfvx.log").exists()

    def test_train_procedural_smoke(self, tmp_path):
        out = tmp_path / "model.vfvx"
        result = CliRunner().invoke(main, [
            "train", "--data", "@procedural:sphere", "--out", str(out),
            "--iters", "30", "--start-res", "16", "--batch-size", "128"])
        assert result.exit_code == 0, result.output
        assert out.exists()
        assert "train-view psnr" in result.output

    def test_render_requires_pose_or_trajectory(self, sphere_model, tmp_path):
        result = CliRunner().invoke(main, [
            "render", "--model", sphere_model, "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_render_pose_deterministic(self, sphere_model, tmp_path):
        pose = " ".join(str(v) for v in
                        look_at_pose((1.5, 0.2, 0.5)).matrix.reshape(-1))
        args = ["render", "--model", sphere_model, "--pose", pose,
                "--tier", "2", "--width", "32", "--height", "32"]
        r1 = CliRunner().invoke(main, args + ["--out", str(tmp_path / "a")])
        r2 = CliRunner().invoke(main, args + ["--out", str(tmp_path / "b")])
        assert r1.exit_code == 0, r1.output
        assert r2.exit_code == 0
        b1 = (tmp_path / "a" / "frame_00000.png").read_bytes()
        b2 = (tmp_path / "b" / "frame_00000.png").read_bytes()
        assert b1 == b2

    def test_render_tier0_uses_fewer_samples_than_tier7(self, sphere_model,
                                                        tmp_path):
        pose = " ".join(str(v) for v in
                        look_at_pose((1.5, 0.2, 0.5)).matrix.reshape(-1))
        outs = []
        for tier in ("0", "7"):
            r = CliRunner().invoke(main, [
                "render", "--model", sphere_model, "--pose", pose,
                "--tier", tier, "--width", "48", "--height", "48",
                "--out", str(tmp_path / tier)])
            assert r.exit_code == 0, r.output
            line = [ln for ln in r.output.splitlines() if "samples" in ln][0]
            outs.append(int(line.split("samples")[1].split()[0]))
        assert outs[0] < outs[1]

    def test_render_orbit_frame_count(self, sphere_model, tmp_path):
        r = CliRunner().invoke(main, [
            "render", "--model", sphere_model, "--trajectory", "orbit",
            "--frames", "5", "--tier", "0", "--width", "24", "--height", "24",
            "--out", str(tmp_path)])
        assert r.exit_code == 0, r.output
        assert len(list(tmp_path.glob("frame_*.png"))) == 5

    def test_benchmark_too_short(self, sphere_model, tmp_path):
        r = CliRunner().invoke(main, [
            "benchmark", "--model", sphere_model, "--seconds", "4",
            "--profile-out", str(tmp_path / "p.vfprofile")])
        assert r.exit_code == 2

    def test_benchmark_writes_profile(self, sphere_model, tmp_path):
        from vistaflow.profiles import load_profile

        out = tmp_path / "machine.vfprofile"
        r = CliRunner().invoke(main, [
            "benchmark", "--model", sphere_model, "--seconds", "5",
            "--profile-out", str(out), "--label", "ci"])
        assert r.exit_code == 0, r.output
        entry = load_profile(out)
        assert entry.profile.machine == "ci"
        assert len(entry.records) > 0
        assert out.read_text().startswith("vfprofile v1 ci")

    def test_quiq_train_bad_mode(self, sphere_model, tmp_path):
        r = CliRunner().invoke(main, [
            "quiq-train", "--model", sphere_model, "--mode", "bogus",
            "--out", str(tmp_path / "q.vfq")])
        assert r.exit_code == 2

    def test_quiq_train_writes_qtable(self, sphere_model, tmp_path):
        from vistaflow.quiq import load_qtable

        out = tmp_path / "q.vfq"
        r = CliRunner().invoke(main, [
            "quiq-train", "--model", sphere_model, "--mode", "dedicated",
            "--seconds", "12", "--target-fps", "30",
            "--out", str(out), "--profiles", str(tmp_path / "missing")])
        assert r.exit_code == 0, r.output
        q = load_qtable(out)
        assert q.values.shape == (120, 3)
        assert "warning" in r.output.lower() or r.exit_code == 0


def run_client(port, n_frames=2, extra=None):
    """Connect to a serve instance and collect frames (+ optionally act)."""
    import websockets.asyncio.client as ws_client

    async def go():
        frames = []
        stats = []
        async with ws_client.connect(f"ws://127.0.0.1:{port}",
                                     max_size=None) as ws:
            if extra:
                await extra(ws)
            while len(frames) < n_frames:
                msg = await asyncio.wait_for(ws.recv(), timeout=15.0)
                if isinstance(msg, bytes):
                    frames.append(decode_frame(msg))
                else:
                    stats.append(json.loads(msg))
        return frames, stats

    return asyncio.run(go())


class TestServe:
    @pytest.fixture
    def server(self):
        grid = make_procedural_scene("sphere", 16)
        srv = VistaflowServer(
            grid, port=0, quiq=False,
            intrinsics=CameraIntrinsics.from_fov_x(32, 32, 0.69))
        srv.start_background()
        yield srv
        srv.stop()

    def test_streams_frames_with_monotone_seq(self, server):
        frames, _ = run_client(server.bound_port, n_frames=3)
        seqs = [meta["seq"] for meta, _rgb in frames]
        assert all(a < b for a, b in zip(seqs, seqs[1:]))
        meta, rgb = frames[0]
        assert rgb.shape == (32, 32, 3)
        assert meta["tier"] == 7  # no-quiq default pins the top tier

    def test_pose_message_changes_view(self, server):
        async def send_pose(ws):
            m = look_at_pose((0.0, 1.6, 0.2)).matrix.reshape(-1).tolist()
            await ws.send(json.dumps({"type": "pose", "m": m, "ts": 0}))
            await asyncio.sleep(0.3)

        frames, _ = run_client(server.bound_port, n_frames=4,
                               extra=send_pose)
        first = frames[0][1]
        last = frames[-1][1]
        assert not np.array_equal(first, last)

    def test_malformed_messages_do_not_kill_connection(self, server):
        async def send_junk(ws):
            await ws.send("this is not json")
            await ws.send(json.dumps({"type": "pose", "m": [1, 2, 3]}))
            await ws.send(json.dumps({"type": "config", "target_fps": -5}))

        frames, _ = run_client(server.bound_port, n_frames=3,
                               extra=send_junk)
        assert len(frames) == 3
        assert server.session.error_frames >= 3

    def test_config_message_sets_tier_override(self, server):
        async def send_config(ws):
            await ws.send(json.dumps({"type": "config", "quiq": False,
                                      "tier": 1}))
            await asyncio.sleep(0.4)

        frames, _ = run_client(server.bound_port, n_frames=6,
                               extra=send_config)
        assert frames[-1][0]["tier"] == 1

    def test_stalled_client_never_blocks_rendering(self, server):
        import time as _time
        import websockets.sync.client as sync_client

        # connect but never read: the render loop must keep producing and
        # the outbound queue must stay bounded (drop-oldest)
        with sync_client.connect(f"ws://127.0.0.1:{server.bound_port}",
                                 max_size=None):
            seq_before = server.session.seq
            _time.sleep(1.0)
            seq_after = server.session.seq
        assert seq_after - seq_before >= 3  # frames kept flowing
        assert len(server._frames) <= 4  # bounded drop-oldest queue
