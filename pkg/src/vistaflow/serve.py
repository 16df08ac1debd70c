"""Real-time serve mode: streams rendered frames to one interactive client.

Three cooperating tasks: the render loop (owns grid read access and produces
frames + telemetry), the controller (consumes the telemetry queue and
publishes settings snapshots), and the connection handler (owns the
websocket, forwards pose snapshots through a single-slot mailbox and drains
the bounded outbound frame queue, dropping the oldest frame when full).

Wire protocol (little-endian binary frames, JSON text messages):
  client -> server: {"type":"pose","m":[16 row-major],"ts":<ms>}
                    {"type":"config","target_fps":<n>,"quiq":<bool>,"tier":<0-7>}
  server -> client: frame = "VFRM" u32 seq, u16 width, u16 height, u8 format
                    (0 = raw RGB8), u8 tier, f32 frame_time_ms, f32 fps_ema,
                    payload; plus a {"type":"stats",...} text message each
                    second.
"""

from __future__ import annotations

import asyncio
import json
import math
import queue
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import CorruptModel, InvalidArgument
from .metrics import fps_stats
from .profiles import TelemetryRecord
from .quiq import (DEFAULT_TIERS, ControlInput, N_TIERS, QTable, TierTable,
                   control_step)
from .scene_io import CameraIntrinsics, CameraPose, ImageBuffer, look_at_pose
from .volume_renderer import RenderSettings, render_image

FRAME_MAGIC = b"VFRM"
FRAME_HEADER = struct.Struct("<4sIHHBBff")
FORMAT_RGB8 = 0
EMA_WEIGHT = 0.25


def encode_frame(seq: int, image: ImageBuffer, tier: int,
                 frame_time_ms: float, fps_ema: float) -> bytes:
    """Binary frame: header + raw RGB8 payload."""
    payload = np.clip(image.rgb * 255.0 + 0.5, 0, 255).astype(np.uint8).tobytes()
    header = FRAME_HEADER.pack(FRAME_MAGIC, seq, image.width, image.height,
                               FORMAT_RGB8, tier, frame_time_ms, fps_ema)
    return header + payload


def decode_frame(data: bytes):
    """Parse a binary frame; returns (meta dict, rgb uint8 array (h, w, 3))."""
    if len(data) < FRAME_HEADER.size:
        raise CorruptModel("frame shorter than header")
    magic, seq, w, h, fmt, tier, ft, ema = FRAME_HEADER.unpack_from(data)
    if magic != FRAME_MAGIC:
        raise CorruptModel(f"bad frame magic {magic!r}")
    if fmt != FORMAT_RGB8:
        raise CorruptModel(f"unknown frame format {fmt}")
    payload = data[FRAME_HEADER.size:]
    if len(payload) != w * h * 3:
        raise CorruptModel("frame payload size mismatch")
    rgb = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    meta = {"seq": seq, "width": w, "height": h, "format": fmt, "tier": tier,
            "frame_time_ms": ft, "fps_ema": ema}
    return meta, rgb


@dataclass
class ServeSession:
    """Mutable state shared (with snapshot semantics) between the tasks."""

    settings: RenderSettings
    pose: CameraPose
    quiq_enabled: bool
    target_fps: float
    tier_override: int | None = None
    seq: int = 0
    error_frames: int = 0
    fps_ema: float = 0.0
    camera_speed: float = 0.0


class VistaflowServer:
    """Single-client frame streaming server."""

    def __init__(self, grid, host: str = "127.0.0.1", port: int = 8765,
                 qtable: QTable | None = None, target_fps: float = 30.0,
                 quiq: bool = True, intrinsics: CameraIntrinsics | None = None,
                 tier_table: TierTable = DEFAULT_TIERS):
        if quiq and qtable is None:
            quiq = False
        self.grid = grid
        self.host = host
        self.port = port
        self.qtable = qtable
        self.tier_table = tier_table
        self.intrinsics = intrinsics or CameraIntrinsics.from_fov_x(
            256, 256, 0.6911112)
        half = 0.5 * (grid.bbox_max - grid.bbox_min)
        center = grid.bbox_min + half
        start_pose = look_at_pose(center + np.array([0.0, -2.2, 1.0])
                                  * float(np.linalg.norm(half)), center)
        start_tier = N_TIERS - 1 if not quiq else 4
        self.session = ServeSession(
            settings=tier_table.settings(start_tier), pose=start_pose,
            quiq_enabled=quiq, target_fps=target_fps, fps_ema=target_fps)
        self._frames: deque = deque(maxlen=4)  # drop-oldest outbound queue
        self._telemetry: queue.Queue = queue.Queue(maxsize=256)
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._loop: asyncio.AbstractEventLoop | None = None
        self._client_lock = threading.Lock()
        self._client_ws = None
        self.bound_port: int | None = None

    # -- render loop --------------------------------------------------------

    def _render_loop(self) -> None:
        prev_pos = None
        clock_ms = 0.0
        while not self._stop.is_set():
            s = self.session
            pose = s.pose
            settings = s.settings
            image, stats = render_image(self.grid, self.intrinsics, pose,
                                        settings)
            s.seq += 1
            fps = 1000.0 / stats.frame_time
            s.fps_ema = (EMA_WEIGHT * fps + (1.0 - EMA_WEIGHT) * s.fps_ema
                         if s.fps_ema > 0 else fps)
            if prev_pos is not None:
                dt = stats.frame_time / 1000.0
                s.camera_speed = float(np.linalg.norm(pose.position - prev_pos)) / dt
            prev_pos = pose.position.copy()
            clock_ms += stats.frame_time
            self._frames.append(encode_frame(s.seq, image, settings.tier,
                                             stats.frame_time, s.fps_ema))
            rec = TelemetryRecord(
                timestamp=clock_ms, frame_time=stats.frame_time,
                settings=settings, camera_speed=s.camera_speed,
                angular_speed=0.0, pixel_count=stats.rays,
                occupancy_hint=stats.occupied_fraction)
            try:
                self._telemetry.put_nowait(rec)
            except queue.Full:
                try:
                    self._telemetry.get_nowait()  # drop oldest
                except queue.Empty:
                    pass
                self._telemetry.put_nowait(rec)

    # -- controller ----------------------------------------------------------

    def _controller_loop(self) -> None:
        while not self._stop.is_set():
            try:
                self._telemetry.get(timeout=0.05)
            except queue.Empty:
                continue
            s = self.session
            if s.quiq_enabled and self.qtable is not None:
                s.settings = control_step(
                    self.qtable, self.tier_table,
                    ControlInput(fps_ema=s.fps_ema,
                                 camera_speed=s.camera_speed,
                                 tier=s.settings.tier),
                    s.target_fps)
            else:
                tier = (s.tier_override if s.tier_override is not None
                        else N_TIERS - 1)
                if s.settings.tier != tier:
                    s.settings = self.tier_table.settings(tier)

    # -- connection handling ---------------------------------------------------

    def _handle_text(self, message: str) -> None:
        s = self.session
        try:
            msg = json.loads(message)
            kind = msg["type"]
            if kind == "pose":
                m = msg["m"]
                if len(m) != 16:
                    raise ValueError("pose needs 16 numbers")
                s.pose = CameraPose(np.asarray(m, dtype=np.float64).reshape(4, 4))
            elif kind == "config":
                if "target_fps" in msg:
                    fps = float(msg["target_fps"])
                    if not (fps > 0 and math.isfinite(fps)):
                        raise ValueError("target_fps must be positive")
                    s.target_fps = fps
                if "quiq" in msg:
                    s.quiq_enabled = bool(msg["quiq"]) and self.qtable is not None
                if "tier" in msg and msg["tier"] is not None:
                    tier = int(msg["tier"])
                    if not (0 <= tier < N_TIERS):
                        raise ValueError("tier out of range")
                    s.tier_override = tier
            else:
                raise ValueError(f"unknown message type {kind!r}")
        except (ValueError, KeyError, TypeError, json.JSONDecodeError):
            s.error_frames += 1

    async def _reader(self, ws) -> None:
        async for message in ws:
            if isinstance(message, str):
                self._handle_text(message)
            else:
                self.session.error_frames += 1

    async def _writer(self, ws) -> None:
        last_stats = time.monotonic()
        window: list[float] = []
        while not self._stop.is_set():
            if self._frames:
                frame = self._frames.popleft()
                await ws.send(frame)
                window.append(FRAME_HEADER.unpack_from(frame)[6])
            else:
                await asyncio.sleep(0.002)
            now = time.monotonic()
            if now - last_stats >= 1.0 and window:
                st = fps_stats(window)
                await ws.send(json.dumps({
                    "type": "stats", "mean_fps": st.mean_fps,
                    "median_fps": st.median_fps, "p10_fps": st.p10_fps,
                    "frame_time_cv": st.frame_time_cv,
                    "tier": self.session.settings.tier,
                    "target_fps": self.session.target_fps,
                    "quiq": self.session.quiq_enabled,
                    "errors": self.session.error_frames,
                }))
                window.clear()
                last_stats = now

    async def _client_session(self, ws) -> None:
        # single interactive client: a new connection takes the slot over
        with self._client_lock:
            old = self._client_ws
            self._client_ws = ws
        if old is not None:
            try:
                await old.close(code=1012, reason="replaced by new viewer")
            except Exception:
                pass
        try:
            reader = asyncio.create_task(self._reader(ws))
            writer = asyncio.create_task(self._writer(ws))
            _done, pending = await asyncio.wait(
                {reader, writer}, return_when=asyncio.FIRST_COMPLETED)
            for task in pending:
                task.cancel()
        finally:
            with self._client_lock:
                if self._client_ws is ws:
                    self._client_ws = None

    async def _run_async(self) -> None:
        import websockets.asyncio.server as ws_server

        self._loop = asyncio.get_running_loop()
        for name, fn in (("render", self._render_loop),
                         ("controller", self._controller_loop)):
            t = threading.Thread(target=fn, name=f"vistaflow-{name}",
                                 daemon=True)
            t.start()
            self._threads.append(t)

        async def handler(ws):
            try:
                await self._client_session(ws)
            except Exception:
                pass  # connection errors never take the server down

        async with ws_server.serve(handler, self.host, self.port) as server:
            self.bound_port = server.sockets[0].getsockname()[1]
            self._ready.set()
            while not self._stop.is_set():
                await asyncio.sleep(0.05)

    def serve_forever(self) -> None:
        self._ready = threading.Event()
        asyncio.run(self._run_async())

    def start_background(self) -> None:
        """Run the server on a daemon thread (used by tests)."""
        self._ready = threading.Event()
        t = threading.Thread(target=self.serve_forever, daemon=True,
                             name="vistaflow-serve")
        t.start()
        self._threads.append(t)
        if not self._ready.wait(timeout=10.0):
            raise InvalidArgument("server failed to start")

    def stop(self) -> None:
        self._stop.set()
