// Connection state machine: handshake, texture catalogue, frame intake.
// The socket is injected so tests can drive it with a fake or a node client.

import {
  ServerMsg,
  TextureEntry,
  VibFrameMsg,
  bye,
  contact,
  decodeFrame,
  hello,
  listTextures,
  select,
} from "./protocol.js";
import { WaveformBuffer } from "./waveform.js";

export interface WsLike {
  send(data: string): void;
  close(): void;
  // callback params typed loosely so browser WebSocket and node's ws both fit
  onopen: ((ev: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  onerror: ((ev: any) => void) | null;
  onclose: ((ev: any) => void) | null;
}

export type SessionState = "connecting" | "ready" | "failed" | "closed";

export interface SessionEvents {
  onState?: (state: SessionState, detail?: string) => void;
  onTextures?: (entries: TextureEntry[]) => void;
  onFrame?: (frame: VibFrameMsg) => void;
  onServerError?: (code: number, text: string) => void;
}

export class UiSession {
  state: SessionState = "connecting";
  textures: TextureEntry[] = [];
  selected: TextureEntry | null = null;
  readonly waveform: WaveformBuffer;
  /** Frames whose seq skipped ahead; nonzero means the stream lost data. */
  seqGaps = 0;
  private nextSeq = 0;
  private epochMs: number | null = null;
  private readonly now: () => number;

  constructor(
    private readonly ws: WsLike,
    private readonly events: SessionEvents = {},
    opts: { sampleRate?: number; seconds?: number; now?: () => number } = {},
  ) {
    this.waveform = new WaveformBuffer(opts.sampleRate ?? 1000, opts.seconds ?? 5);
    this.now = opts.now ?? (() => performance.now());
    ws.onopen = () => this.send(hello());
    ws.onmessage = (ev) => this.handle(JSON.parse(String(ev.data)) as ServerMsg);
    ws.onerror = () => this.fail("connection error");
    ws.onclose = () => {
      if (this.state !== "failed") this.setState("closed");
    };
  }

  private send(msg: unknown): void {
    this.ws.send(JSON.stringify(msg));
  }

  private setState(state: SessionState, detail?: string): void {
    this.state = state;
    this.events.onState?.(state, detail);
  }

  private fail(detail: string): void {
    this.setState("failed", detail);
  }

  private handle(msg: ServerMsg): void {
    switch (msg.type) {
      case "HELLO":
        this.send(listTextures());
        break;
      case "TEXTURE_LIST":
        this.textures = msg.entries;
        this.setState("ready");
        this.events.onTextures?.(msg.entries);
        break;
      case "VIB_FRAME": {
        if (msg.seq !== this.nextSeq) this.seqGaps += 1;
        this.nextSeq = msg.seq + 1;
        this.waveform.push(decodeFrame(msg));
        this.events.onFrame?.(msg);
        break;
      }
      case "ERROR":
        this.events.onServerError?.(msg.code, msg.text);
        this.fail(`server error ${msg.code}: ${msg.text}`);
        break;
    }
  }

  selectTexture(id: number): void {
    const entry = this.textures.find((e) => e.id === id);
    if (!entry) throw new Error(`no texture with id ${id}`);
    this.selected = entry;
    this.waveform.clear();
    this.nextSeq = 0;
    this.seqGaps = 0;
    this.epochMs = this.now(); // stream clock restarts with the selection
    this.send(select(id));
  }

  /** Seconds since the texture was selected; contacts carry this time. */
  sessionTime(): number {
    if (this.epochMs === null) return 0;
    return (this.now() - this.epochMs) / 1000;
  }

  sendContact(u: number, v: number, depthMm: number): void {
    if (!this.selected) return;
    this.send(contact(this.sessionTime(), u, v, depthMm));
  }

  close(): void {
    try {
      this.send(bye());
    } catch {
      // socket may already be gone
    }
    this.ws.close();
  }
}
