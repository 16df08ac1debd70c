/**
 * Loopback test against a real serve process (needs the python backend
 * installed; skipped automatically when it is not available).
 */

import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { OrbitCamera } from "../src/orbit.js";
import { decodeFrame, Frame, poseMessage } from "../src/protocol.js";

const PYTHON = process.env.VISTAFLOW_PYTHON ?? "python3";
const PORT = 18000 + (process.pid % 2000);

function backendAvailable(): boolean {
  try {
    execFileSync(PYTHON, ["-c", "import vistaflow"], { stdio: "ignore" });
    return true;
  } catch {
    return false;
  }
}

const available = backendAvailable();
let server: ChildProcess | null = null;

beforeAll(async () => {
  if (!available) return;
  const dir = mkdtempSync(join(tmpdir(), "vf-viewer-"));
  const model = join(dir, "sphere.vfvx");
  execFileSync(PYTHON, [
    "-c",
    "import sys; from vistaflow import make_procedural_scene, save_model; " +
      "save_model(make_procedural_scene('sphere', 16), sys.argv[1])",
    model,
  ]);
  server = spawn(PYTHON, [
    "-m", "vistaflow.cli", "serve", "--model", model, "--port", String(PORT),
    "--no-quiq", "--width", "48", "--height", "48",
  ], { stdio: "ignore" });
  // wait for the port to accept connections
  for (let i = 0; i < 100; i++) {
    const ok = await new Promise<boolean>((resolve) => {
      const probe = new WebSocket(`ws://127.0.0.1:${PORT}`);
      probe.on("open", () => {
        probe.close();
        resolve(true);
      });
      probe.on("error", () => resolve(false));
    });
    if (ok) return;
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error("serve process never came up");
}, 30000);

afterAll(() => {
  server?.kill();
});

describe.skipIf(!available)("viewer against loopback serve", () => {
  it("first frame arrives within 500 ms and display stays seq-monotone", async () => {
    const ws = new WebSocket(`ws://127.0.0.1:${PORT}`);
    ws.binaryType = "arraybuffer";
    const frames: Frame[] = [];
    const firstFrame = new Promise<number>((resolve, reject) => {
      const connectedAt = { t: 0 };
      ws.on("open", () => (connectedAt.t = Date.now()));
      ws.on("message", (data) => {
        if (data instanceof ArrayBuffer) {
          frames.push(decodeFrame(data));
          if (frames.length === 1) resolve(Date.now() - connectedAt.t);
        }
      });
      ws.on("error", reject);
      setTimeout(() => reject(new Error("no frame within 5s")), 5000);
    });
    const latency = await firstFrame;
    expect(latency).toBeLessThanOrEqual(500);

    await new Promise((r) => setTimeout(r, 600));
    ws.close();
    expect(frames.length).toBeGreaterThan(2);
    const seqs = frames.map((f) => f.seq);
    for (let i = 1; i < seqs.length; i++) {
      expect(seqs[i]).toBeGreaterThan(seqs[i - 1]);
    }
    expect(frames[0].width).toBe(48);
  }, 20000);

  it("pose drags produce visibly updated viewpoints", async () => {
    const ws = new WebSocket(`ws://127.0.0.1:${PORT}`);
    ws.binaryType = "arraybuffer";
    const frames: Frame[] = [];
    ws.on("message", (data) => {
      if (data instanceof ArrayBuffer) frames.push(decodeFrame(data));
    });
    await new Promise((resolve, reject) => {
      ws.on("open", resolve);
      ws.on("error", reject);
    });
    await new Promise((r) => setTimeout(r, 400));
    const before = frames.at(-1)!;

    // a big orbit drag, as the input handler would produce
    const camera = new OrbitCamera({ radius: 2.0, elevation: 0.4 });
    camera.rotate(Math.PI / 2, -0.2);
    ws.send(poseMessage(camera.cameraToWorld(), Date.now()));
    await new Promise((r) => setTimeout(r, 700));
    ws.close();
    const after = frames.at(-1)!;
    expect(after.seq).toBeGreaterThan(before.seq);
    let differing = 0;
    for (let i = 0; i < before.pixels.length; i++) {
      if (before.pixels[i] !== after.pixels[i]) differing++;
    }
    // the sphere moved in frame: a solid share of pixels must change
    expect(differing).toBeGreaterThan(before.pixels.length * 0.02);
  }, 20000);
});
