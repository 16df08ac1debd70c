/**
 * Connection machine: owns the websocket, gates frames to a seq-monotone
 * single slot, and reconnects with exponential backoff on loss.
 *
 * The socket constructor and clock are injectable so the logic runs under
 * plain unit tests without a browser or server.
 */

import { decodeFrame, Frame, StatsMessage } from "./protocol.js";

// handler params are deliberately loose so a browser WebSocket satisfies
// the shape structurally
export type SocketLike = {
  binaryType: "blob" | "arraybuffer";
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onopen: ((ev: any) => void) | null;
  onclose: ((ev: any) => void) | null;
  onerror: ((ev: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  send(data: string): void;
  close(): void;
};

export type SocketFactory = (url: string) => SocketLike;

export interface SessionEvents {
  onFrame?: (frame: Frame) => void;
  onStats?: (stats: StatsMessage) => void;
  onStatus?: (status: "connecting" | "open" | "closed") => void;
}

const BACKOFF_BASE_MS = 500;
const BACKOFF_MAX_MS = 5000;

export class ViewerSession {
  lastShownSeq = 0;
  droppedFrames = 0;
  status: "connecting" | "open" | "closed" = "closed";

  private socket: SocketLike | null = null;
  private attempts = 0;
  private stopped = false;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly url: string,
    private readonly events: SessionEvents,
    private readonly socketFactory: SocketFactory,
    private readonly schedule: (fn: () => void, ms: number) => ReturnType<typeof setTimeout> = setTimeout,
  ) {}

  connect(): void {
    this.stopped = false;
    this.open();
  }

  close(): void {
    this.stopped = true;
    if (this.retryTimer !== null) clearTimeout(this.retryTimer);
    this.socket?.close();
    this.setStatus("closed");
  }

  send(message: string): void {
    if (this.status === "open") {
      this.socket?.send(message);
    }
  }

  backoffMs(): number {
    return Math.min(BACKOFF_MAX_MS, BACKOFF_BASE_MS * 2 ** Math.max(0, this.attempts - 1));
  }

  private setStatus(status: "connecting" | "open" | "closed"): void {
    this.status = status;
    this.events.onStatus?.(status);
  }

  private open(): void {
    this.attempts += 1;
    this.setStatus("connecting");
    const socket = this.socketFactory(this.url);
    this.socket = socket;
    socket.binaryType = "arraybuffer";
    socket.onopen = () => {
      this.attempts = 0;
      this.setStatus("open");
    };
    socket.onmessage = (ev) => this.handleMessage(ev.data);
    socket.onerror = () => {
      /* onclose follows; nothing to do */
    };
    socket.onclose = () => {
      this.setStatus("closed");
      if (!this.stopped) {
        this.retryTimer = this.schedule(() => this.open(), this.backoffMs());
      }
    };
  }

  private handleMessage(data: unknown): void {
    if (typeof data === "string") {
      try {
        const msg = JSON.parse(data);
        if (msg.type === "stats") this.events.onStats?.(msg as StatsMessage);
      } catch {
        /* malformed server text: ignore */
      }
      return;
    }
    if (data instanceof ArrayBuffer) {
      let frame: Frame;
      try {
        frame = decodeFrame(data);
      } catch {
        return;
      }
      // display order must be seq-monotone: stale frames are dropped
      if (frame.seq <= this.lastShownSeq) {
        this.droppedFrames += 1;
        return;
      }
      this.lastShownSeq = frame.seq;
      this.events.onFrame?.(frame);
    }
  }
}
