// JSON mirror of the touch-streaming protocol. One object per message,
// field names as on the wire; frame sample bytes travel as base64.

export const PROTOCOL_VERSION = 1;

export interface TextureEntry {
  id: number;
  name: string;
  width_px: number;
  height_px: number;
}

export interface HelloMsg {
  type: "HELLO";
  version: number;
}

export interface TextureListMsg {
  type: "TEXTURE_LIST";
  entries: TextureEntry[];
}

export interface ContactMsg {
  type: "CONTACT";
  t: number;
  u: number;
  v: number;
  depth_mm: number;
}

export interface VibFrameMsg {
  type: "VIB_FRAME";
  seq: number;
  t0: number;
  dt: number;
  n: number;
  qmin: number;
  qmax: number;
  q: string;
}

export interface ErrorMsg {
  type: "ERROR";
  code: number;
  text: string;
}

export type ServerMsg = HelloMsg | TextureListMsg | VibFrameMsg | ErrorMsg;

export function hello(): HelloMsg {
  return { type: "HELLO", version: PROTOCOL_VERSION };
}

export function listTextures(): { type: "LIST_TEXTURES" } {
  return { type: "LIST_TEXTURES" };
}

export function select(id: number): { type: "SELECT"; id: number } {
  return { type: "SELECT", id };
}

export function contact(t: number, u: number, v: number, depthMm: number): ContactMsg {
  return { type: "CONTACT", t, u, v, depth_mm: depthMm };
}

export function bye(): { type: "BYE" } {
  return { type: "BYE" };
}

export function frameBytes(frame: VibFrameMsg): Uint8Array {
  const raw = atob(frame.q);
  const out = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) out[i] = raw.charCodeAt(i);
  return out;
}

/** Reconstruct samples: qmin + byte * (qmax - qmin) / 255. */
export function decodeFrame(frame: VibFrameMsg): Float64Array {
  const bytes = frameBytes(frame);
  const step = (frame.qmax - frame.qmin) / 255;
  const out = new Float64Array(bytes.length);
  for (let i = 0; i < bytes.length; i++) out[i] = frame.qmin + bytes[i] * step;
  return out;
}

/**
 * Quantize samples against a given range, exactly like the server encoder:
 * round half-up to 255 levels, everything collapsing to 0 when the range is
 * empty. Used for the codec symmetry check (decode -> quantize == bytes).
 */
export function quantize(samples: ArrayLike<number>, qmin: number, qmax: number): Uint8Array {
  const out = new Uint8Array(samples.length);
  if (qmax > qmin) {
    const scale = 255 / (qmax - qmin);
    for (let i = 0; i < samples.length; i++) {
      const code = Math.floor((samples[i] - qmin) * scale + 0.5);
      out[i] = Math.min(255, Math.max(0, code));
    }
  }
  return out;
}

/** Full client-side encoder: frame range is the float32-rounded min/max. */
export function encodeFrame(
  samples: ArrayLike<number>,
  seq: number,
  t0: number,
  dt: number,
): VibFrameMsg {
  if (samples.length === 0) throw new Error("no samples to encode");
  let lo = samples[0];
  let hi = samples[0];
  for (let i = 1; i < samples.length; i++) {
    if (samples[i] < lo) lo = samples[i];
    if (samples[i] > hi) hi = samples[i];
  }
  const qmin = Math.fround(lo);
  const qmax = Math.fround(hi);
  const bytes = quantize(samples, qmin, qmax);
  let raw = "";
  for (const b of bytes) raw += String.fromCharCode(b);
  return {
    type: "VIB_FRAME",
    seq,
    t0,
    dt: Math.fround(dt),
    n: samples.length,
    qmin,
    qmax,
    q: btoa(raw),
  };
}
