// Page wiring: socket, texture picker, pointer capture, heartbeat, chart.

import { applyOverlay, OverlayMode, previewImageUrl, textureImageUrl } from "./overlay.js";
import { ContactThrottle, pointerToContact } from "./pointer.js";
import { UiSession } from "./session.js";
import { renderWaveform } from "./waveform.js";

const HEARTBEAT_MS = 33; // keeps the stream advancing between pointer events

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

function wsUrl(): string {
  const fromQuery = new URLSearchParams(location.search).get("ws");
  if (fromQuery) return fromQuery;
  return `ws://${location.host}/ws`;
}

function start(): void {
  const banner = el<HTMLDivElement>("banner");
  const retry = el<HTMLButtonElement>("retry");
  const picker = el<HTMLSelectElement>("texture-picker");
  const depthSlider = el<HTMLInputElement>("depth");
  const blendSlider = el<HTMLInputElement>("blend");
  const modeButtons = Array.from(document.querySelectorAll<HTMLButtonElement>("[data-mode]"));
  const stack = el<HTMLDivElement>("stack");
  const textureImg = el<HTMLImageElement>("texture-img");
  const mapImg = el<HTMLImageElement>("map-img");
  const canvas = el<HTMLCanvasElement>("chart");
  const ctx = canvas.getContext("2d");

  const pointer = { u: 0.5, v: 0.5, down: false };
  let mode: OverlayMode = "blend";
  let heartbeat: ReturnType<typeof setInterval> | null = null;

  const ws = new WebSocket(wsUrl());
  const session = new UiSession(ws, {
    onState: (state, detail) => {
      banner.dataset.state = state;
      if (state === "failed") {
        banner.textContent = `connection failed: ${detail ?? "unknown"}`;
        retry.hidden = false;
        if (heartbeat) clearInterval(heartbeat);
      } else if (state === "ready") {
        banner.textContent = "connected";
        retry.hidden = true;
      } else {
        banner.textContent = state;
      }
    },
    onTextures: (entries) => {
      picker.replaceChildren(
        ...entries.map((e) => {
          const opt = document.createElement("option");
          opt.value = String(e.id);
          opt.textContent = `${e.name} (${e.width_px}×${e.height_px})`;
          return opt;
        }),
      );
      if (entries.length > 0) pick(entries[0].id);
    },
    onServerError: (code, text) => {
      banner.textContent = `server error ${code}: ${text}`;
    },
  });

  function pick(id: number): void {
    session.selectTexture(id);
    picker.value = String(id);
    const name = session.selected!.name;
    textureImg.onerror = () => {
      // no photographic texture for this map: show the preview instead
      textureImg.onerror = null;
      textureImg.src = previewImageUrl(name);
    };
    textureImg.src = textureImageUrl(name);
    mapImg.src = previewImageUrl(name);
    if (heartbeat) clearInterval(heartbeat);
    heartbeat = setInterval(() => {
      session.sendContact(pointer.u, pointer.v, pointer.down ? depthNow() : 0);
    }, HEARTBEAT_MS);
  }

  const depthNow = () => Number(depthSlider.value);
  const throttle = new ContactThrottle(120);

  function updatePointer(ev: PointerEvent): void {
    const rect = stack.getBoundingClientRect();
    const msg = pointerToContact(ev.clientX, ev.clientY, rect, depthNow(), 0);
    pointer.u = msg.u;
    pointer.v = msg.v;
  }

  stack.addEventListener("pointerdown", (ev) => {
    stack.setPointerCapture(ev.pointerId);
    pointer.down = true;
    updatePointer(ev);
    session.sendContact(pointer.u, pointer.v, depthNow());
  });
  stack.addEventListener("pointermove", (ev) => {
    updatePointer(ev);
    if (pointer.down && throttle.allow(performance.now())) {
      session.sendContact(pointer.u, pointer.v, depthNow());
    }
  });
  const release = (ev: PointerEvent) => {
    if (!pointer.down) return;
    pointer.down = false;
    updatePointer(ev);
    // release bypasses the throttle: the stream must drop to zero now
    session.sendContact(pointer.u, pointer.v, 0);
  };
  stack.addEventListener("pointerup", release);
  stack.addEventListener("pointercancel", release);

  picker.addEventListener("change", () => pick(Number(picker.value)));
  blendSlider.addEventListener("input", () => {
    applyOverlay({ texture: textureImg, map: mapImg }, mode, Number(blendSlider.value) / 100);
  });
  for (const btn of modeButtons) {
    btn.addEventListener("click", () => {
      mode = btn.dataset.mode as OverlayMode;
      applyOverlay({ texture: textureImg, map: mapImg }, mode, Number(blendSlider.value) / 100);
    });
  }
  applyOverlay({ texture: textureImg, map: mapImg }, mode, Number(blendSlider.value) / 100);

  retry.addEventListener("click", () => location.reload());
  window.addEventListener("beforeunload", () => session.close());

  const draw = () => {
    // rendering never waits on the socket: the last buffer is always drawn
    if (ctx) renderWaveform(ctx, session.waveform, canvas.width, canvas.height);
    requestAnimationFrame(draw);
  };
  requestAnimationFrame(draw);
}

start();
