/**
 * Browser entry point: connects to the serve endpoint (?server=ws://...),
 * blits streamed frames to the canvas, maps mouse input to the orbit
 * camera, and keeps the HUD current.
 */

import { Hud } from "./hud.js";
import { OrbitCamera } from "./orbit.js";
import { poseMessage, rgbToRgba, Frame } from "./protocol.js";
import { ViewerSession } from "./session.js";
import { PoseThrottle } from "./throttle.js";

function element<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
}

export function start(): void {
  const params = new URLSearchParams(window.location.search);
  const url = params.get("server") ?? `ws://${window.location.hostname}:8765`;

  const canvas = element<HTMLCanvasElement>("view");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas context unavailable");
  const hudEl = element<HTMLDivElement>("hud");
  const banner = element<HTMLDivElement>("banner");
  const fpsSlider = element<HTMLInputElement>("target-fps");
  const fpsLabel = element<HTMLSpanElement>("target-fps-value");
  const quiqToggle = element<HTMLInputElement>("quiq");

  const camera = new OrbitCamera({ radius: 2.0, elevation: 0.45 });
  const throttle = new PoseThrottle(120);
  let rgba: Uint8ClampedArray<ArrayBuffer> | undefined;

  const session = new ViewerSession(
    url,
    {
      onFrame: (frame: Frame) => {
        if (canvas.width !== frame.width || canvas.height !== frame.height) {
          canvas.width = frame.width;
          canvas.height = frame.height;
        }
        rgba = rgbToRgba(frame, rgba);
        ctx.putImageData(new ImageData(rgba, frame.width, frame.height), 0, 0);
        hud.observeFrame(frame.tier, frame.fpsEma, performance.now());
        renderHud();
      },
      onStats: () => renderHud(),
      onStatus: (status) => {
        hud.connection = status;
        banner.style.display = status === "open" ? "none" : "block";
        banner.textContent =
          status === "connecting" ? "connecting…" : "connection lost — retrying";
        renderHud();
      },
    },
    (wsUrl) => new WebSocket(wsUrl),
  );
  const hud = new Hud({ send: (m) => session.send(m) });

  function renderHud(): void {
    hudEl.textContent = hud.lines().join("\n");
  }

  function pushPose(): void {
    const pose = camera.cameraToWorld();
    if (throttle.maybeSend(pose, performance.now())) {
      session.send(poseMessage(pose, Date.now()));
    }
  }

  let dragging = false;
  canvas.addEventListener("mousedown", () => (dragging = true));
  window.addEventListener("mouseup", () => (dragging = false));
  window.addEventListener("mousemove", (ev) => {
    if (!dragging) return;
    camera.rotate(-ev.movementX * 0.008, ev.movementY * 0.006);
    pushPose();
  });
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    camera.zoom(ev.deltaY > 0 ? 1.1 : 1 / 1.1);
    pushPose();
  });
  window.addEventListener("keydown", (ev) => {
    const step = 0.12;
    if (ev.key === "ArrowLeft") camera.rotate(step, 0);
    else if (ev.key === "ArrowRight") camera.rotate(-step, 0);
    else if (ev.key === "ArrowUp") camera.rotate(0, step);
    else if (ev.key === "ArrowDown") camera.rotate(0, -step);
    else return;
    pushPose();
  });

  fpsSlider.addEventListener("input", () => {
    fpsLabel.textContent = fpsSlider.value;
    hud.setTargetFps(Number(fpsSlider.value));
  });
  quiqToggle.addEventListener("change", () => {
    hud.toggleQuiq(quiqToggle.checked);
  });

  session.connect();
  renderHud();
}

start();
