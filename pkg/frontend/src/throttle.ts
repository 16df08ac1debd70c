/**
 * Pose send gate: at most maxPerSecond messages, and only when the pose
 * actually changed since the last send.
 */

export class PoseThrottle {
  private lastSentAt = -Infinity;
  private lastPose: number[] | null = null;
  private readonly minIntervalMs: number;

  constructor(maxPerSecond = 120) {
    this.minIntervalMs = 1000 / maxPerSecond;
  }

  /** True when this pose should go out now (and records it as sent). */
  maybeSend(pose: number[], nowMs: number): boolean {
    if (nowMs - this.lastSentAt < this.minIntervalMs) {
      return false;
    }
    if (this.lastPose !== null && poseEquals(this.lastPose, pose)) {
      return false;
    }
    this.lastSentAt = nowMs;
    this.lastPose = [...pose];
    return true;
  }
}

function poseEquals(a: number[], b: number[]): boolean {
  if (a.length !== b.length) return false;
  for (let i = 0; i < a.length; i++) {
    if (a[i] !== b[i]) return false;
  }
  return true;
}
