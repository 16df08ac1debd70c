/**
 * Wire protocol shared with the serve endpoint.
 *
 * Binary frames (little-endian): "VFRM", u32 seq, u16 width, u16 height,
 * u8 format (0 = raw RGB8), u8 tier, f32 frame_time_ms, f32 fps_ema,
 * then width*height*3 payload bytes. Text messages are JSON.
 */

export const FRAME_MAGIC = 0x4d524656; // "VFRM" read as LE u32
export const HEADER_BYTES = 22;
export const FORMAT_RGB8 = 0;

export interface Frame {
  seq: number;
  width: number;
  height: number;
  format: number;
  tier: number;
  frameTimeMs: number;
  fpsEma: number;
  pixels: Uint8Array;
}

export interface StatsMessage {
  type: "stats";
  mean_fps: number;
  median_fps: number;
  p10_fps: number;
  frame_time_cv: number;
  tier: number;
  target_fps: number;
  quiq: boolean;
  errors: number;
}

export function decodeFrame(data: ArrayBuffer): Frame {
  if (data.byteLength < HEADER_BYTES) {
    throw new Error(`frame shorter than header: ${data.byteLength} bytes`);
  }
  const view = new DataView(data);
  if (view.getUint32(0, true) !== FRAME_MAGIC) {
    throw new Error("bad frame magic");
  }
  const frame: Frame = {
    seq: view.getUint32(4, true),
    width: view.getUint16(8, true),
    height: view.getUint16(10, true),
    format: view.getUint8(12),
    tier: view.getUint8(13),
    frameTimeMs: view.getFloat32(14, true),
    fpsEma: view.getFloat32(18, true),
    pixels: new Uint8Array(data, HEADER_BYTES),
  };
  if (frame.format !== FORMAT_RGB8) {
    throw new Error(`unknown frame format ${frame.format}`);
  }
  if (frame.pixels.length !== frame.width * frame.height * 3) {
    throw new Error("frame payload size mismatch");
  }
  return frame;
}

export function poseMessage(cameraToWorld: number[], tsMs: number): string {
  if (cameraToWorld.length !== 16) {
    throw new Error("pose needs 16 numbers (row-major 4x4)");
  }
  return JSON.stringify({ type: "pose", m: cameraToWorld, ts: tsMs });
}

export interface ConfigUpdate {
  targetFps?: number;
  quiq?: boolean;
  tier?: number;
}

export function configMessage(update: ConfigUpdate): string {
  const msg: Record<string, unknown> = { type: "config" };
  if (update.targetFps !== undefined) msg.target_fps = update.targetFps;
  if (update.quiq !== undefined) msg.quiq = update.quiq;
  if (update.tier !== undefined) msg.tier = update.tier;
  return JSON.stringify(msg);
}

/** RGB8 payload -> RGBA bytes suitable for a canvas ImageData blit. */
export function rgbToRgba(
  frame: Frame,
  out?: Uint8ClampedArray<ArrayBuffer>,
): Uint8ClampedArray<ArrayBuffer> {
  const n = frame.width * frame.height;
  const rgba = out && out.length === n * 4 ? out : new Uint8ClampedArray(n * 4);
  const src = frame.pixels;
  for (let i = 0; i < n; i++) {
    rgba[i * 4] = src[i * 3];
    rgba[i * 4 + 1] = src[i * 3 + 1];
    rgba[i * 4 + 2] = src[i * 3 + 2];
    rgba[i * 4 + 3] = 255;
  }
  return rgba;
}
