// Pointer position -> normalized contact coordinates, plus send throttling.

import { ContactMsg, contact } from "./protocol.js";

export interface Rect {
  left: number;
  top: number;
  width: number;
  height: number;
}

const clamp01 = (x: number) => Math.min(1, Math.max(0, x));

/**
 * Map a pointer position inside an image rect to a CONTACT message.
 * (0,0) is the image's top-left corner, (1,1) the bottom-right.
 */
export function pointerToContact(
  clientX: number,
  clientY: number,
  rect: Rect,
  depthMm: number,
  t: number,
): ContactMsg {
  const u = clamp01((clientX - rect.left) / rect.width);
  const v = clamp01((clientY - rect.top) / rect.height);
  return contact(t, u, v, depthMm);
}

/**
 * Rate limiter for pointer-move contacts. Release events must never be
 * dropped, so callers bypass it for pointer-up.
 */
export class ContactThrottle {
  private lastSent = -Infinity;
  readonly minIntervalMs: number;

  constructor(maxPerSecond = 120) {
    this.minIntervalMs = 1000 / maxPerSecond;
  }

  allow(nowMs: number): boolean {
    if (nowMs - this.lastSent < this.minIntervalMs) return false;
    this.lastSent = nowMs;
    return true;
  }
}
