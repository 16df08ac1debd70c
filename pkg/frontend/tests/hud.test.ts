import { describe, expect, it } from "vitest";

import { Hud } from "../src/hud.js";

function makeHud() {
  const sent: string[] = [];
  const hud = new Hud({ send: (m) => sent.push(m) });
  return { hud, sent };
}

describe("Hud", () => {
  it("displays the fps it was given", () => {
    const { hud } = makeHud();
    hud.observeFrame(4, 100, 0);
    expect(hud.lines()[0]).toContain("100");
  });

  it("counts tier switches over a rolling second", () => {
    const { hud } = makeHud();
    hud.observeFrame(3, 50, 0);
    hud.observeFrame(4, 50, 100);
    hud.observeFrame(3, 50, 200);
    expect(hud.tierSwitchesPerSecond()).toBe(2);
    hud.observeFrame(3, 50, 1500); // old switches age out
    expect(hud.tierSwitchesPerSecond()).toBe(0);
  });

  it("slider change sends one target_fps config message", () => {
    const { hud, sent } = makeHud();
    hud.setTargetFps(30); // default: no message
    expect(sent).toHaveLength(0);
    hud.setTargetFps(60);
    hud.setTargetFps(60);
    expect(sent).toHaveLength(1);
    expect(JSON.parse(sent[0])).toEqual({ type: "config", target_fps: 60 });
  });

  it("quiq toggle sends quiq=false once", () => {
    const { hud, sent } = makeHud();
    hud.toggleQuiq(false);
    hud.toggleQuiq(false);
    expect(sent).toHaveLength(1);
    expect(JSON.parse(sent[0])).toEqual({ type: "config", quiq: false });
  });
});
