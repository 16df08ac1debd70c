import { describe, expect, it, vi } from "vitest";

import { FORMAT_RGB8, HEADER_BYTES } from "../src/protocol.js";
import { SocketLike, ViewerSession } from "../src/session.js";

class FakeSocket implements SocketLike {
  binaryType = "blob";
  onopen: ((ev?: unknown) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  sent: string[] = [];
  closed = false;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  emitFrame(seq: number): void {
    const buf = new ArrayBuffer(HEADER_BYTES + 3);
    const view = new DataView(buf);
    view.setUint8(0, 0x56);
    view.setUint8(1, 0x46);
    view.setUint8(2, 0x52);
    view.setUint8(3, 0x4d);
    view.setUint32(4, seq, true);
    view.setUint16(8, 1, true);
    view.setUint16(10, 1, true);
    view.setUint8(12, FORMAT_RGB8);
    this.onmessage?.({ data: buf });
  }
}

function makeSession() {
  const sockets: FakeSocket[] = [];
  const frames: number[] = [];
  const statuses: string[] = [];
  const timers: Array<{ fn: () => void; ms: number }> = [];
  const session = new ViewerSession(
    "ws://test",
    {
      onFrame: (f) => frames.push(f.seq),
      onStatus: (s) => statuses.push(s),
    },
    () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
    ((fn: () => void, ms: number) => {
      timers.push({ fn, ms });
      return 0 as unknown as ReturnType<typeof setTimeout>;
    }) as typeof setTimeout,
  );
  return { session, sockets, frames, statuses, timers };
}

describe("ViewerSession", () => {
  it("shows frames in strictly increasing seq order", () => {
    const { session, sockets, frames } = makeSession();
    session.connect();
    const sock = sockets[0];
    sock.onopen?.();
    sock.emitFrame(1);
    sock.emitFrame(3);
    sock.emitFrame(2); // stale: must be dropped
    sock.emitFrame(4);
    expect(frames).toEqual([1, 3, 4]);
    expect(session.droppedFrames).toBe(1);
  });

  it("reconnects with growing backoff after loss", () => {
    const { session, sockets, statuses, timers } = makeSession();
    session.connect();
    sockets[0].onopen?.();
    expect(statuses).toEqual(["connecting", "open"]);

    sockets[0].onclose?.();
    expect(statuses.at(-1)).toBe("closed");
    expect(timers).toHaveLength(1);
    const firstDelay = timers[0].ms;

    timers[0].fn(); // retry -> second socket, fails immediately
    sockets[1].onclose?.();
    expect(timers).toHaveLength(2);
    expect(timers[1].ms).toBeGreaterThanOrEqual(firstDelay);
  });

  it("stops retrying once closed by the user", () => {
    const { session, sockets, timers } = makeSession();
    session.connect();
    sockets[0].onopen?.();
    session.close();
    expect(sockets[0].closed).toBe(true);
    expect(timers).toHaveLength(0);
  });

  it("sends only while open", () => {
    const { session, sockets } = makeSession();
    session.connect();
    session.send("early"); // connecting: dropped
    sockets[0].onopen?.();
    session.send("hello");
    expect(sockets[0].sent).toEqual(["hello"]);
  });

  it("ignores malformed binary messages", () => {
    const { session, sockets, frames } = makeSession();
    session.connect();
    sockets[0].onopen?.();
    sockets[0].onmessage?.({ data: new ArrayBuffer(4) });
    sockets[0].emitFrame(1);
    expect(frames).toEqual([1]);
  });
});
