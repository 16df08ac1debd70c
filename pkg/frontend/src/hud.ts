/**
 * HUD state: fps EMA, current tier, tier switches per second, target-fps
 * slider and the adaptive-quality toggle. Pure model; the DOM layer reads
 * lines() and forwards input events through the intent methods.
 */

import { configMessage } from "./protocol.js";

export interface HudSink {
  send(message: string): void;
}

export class Hud {
  fpsEma = 0;
  tier = 0;
  targetFps = 30;
  quiqEnabled = true;
  connection = "closed";

  private tierChanges: number[] = [];
  private lastTier: number | null = null;

  constructor(private readonly sink: HudSink) {}

  observeFrame(tier: number, fpsEma: number, nowMs: number): void {
    this.fpsEma = fpsEma;
    if (this.lastTier !== null && tier !== this.lastTier) {
      this.tierChanges.push(nowMs);
    }
    this.lastTier = tier;
    this.tier = tier;
    const cutoff = nowMs - 1000;
    this.tierChanges = this.tierChanges.filter((t) => t >= cutoff);
  }

  tierSwitchesPerSecond(): number {
    return this.tierChanges.length;
  }

  setTargetFps(value: number): void {
    if (value === this.targetFps) return;
    this.targetFps = value;
    this.sink.send(configMessage({ targetFps: value }));
  }

  toggleQuiq(enabled: boolean): void {
    if (enabled === this.quiqEnabled) return;
    this.quiqEnabled = enabled;
    this.sink.send(configMessage({ quiq: enabled }));
  }

  lines(): string[] {
    return [
      `fps ${this.fpsEma.toFixed(0)} / target ${this.targetFps}`,
      `tier ${this.tier}`,
      `switches/s ${this.tierSwitchesPerSecond()}`,
      `quiq ${this.quiqEnabled ? "on" : "off"}`,
      this.connection,
    ];
  }
}
