// Rolling waveform buffer and strip-chart rendering.

/** The 2D-context subset the chart needs; tests inject a recording fake. */
export interface ChartContext {
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
}

export const Y_MAX = 0.8; // fixed plotting ceiling for intensity traces

/** Last few seconds of decoded samples, oldest first. */
export class WaveformBuffer {
  private data: Float32Array;
  private length = 0;
  private head = 0; // insertion point when full

  constructor(
    readonly sampleRate = 1000,
    readonly seconds = 5,
  ) {
    this.data = new Float32Array(sampleRate * seconds);
  }

  push(samples: ArrayLike<number>): void {
    for (let i = 0; i < samples.length; i++) {
      if (this.length < this.data.length) {
        this.data[this.length++] = samples[i];
      } else {
        this.data[this.head] = samples[i];
        this.head = (this.head + 1) % this.data.length;
      }
    }
  }

  /** Snapshot in chronological order. */
  values(): Float32Array {
    if (this.length < this.data.length) return this.data.slice(0, this.length);
    const out = new Float32Array(this.data.length);
    out.set(this.data.subarray(this.head));
    out.set(this.data.subarray(0, this.head), this.data.length - this.head);
    return out;
  }

  get size(): number {
    return this.length;
  }

  last(): number {
    if (this.length === 0) return 0;
    if (this.length < this.data.length) return this.data[this.length - 1];
    return this.data[(this.head + this.data.length - 1) % this.data.length];
  }

  clear(): void {
    this.length = 0;
    this.head = 0;
  }
}

/**
 * Draw the buffer as a strip chart. The y axis is fixed to [0, Y_MAX];
 * values above the ceiling clip flat. An empty buffer draws the zero line.
 */
export function renderWaveform(
  ctx: ChartContext,
  buffer: WaveformBuffer,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  const pad = 14;
  const plotW = width - 2 * pad;
  const plotH = height - 2 * pad;
  const yFor = (value: number) =>
    height - pad - (Math.min(Math.max(value, 0), Y_MAX) / Y_MAX) * plotH;

  ctx.strokeStyle = "#555";
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.moveTo(pad, yFor(0));
  ctx.lineTo(width - pad, yFor(0));
  ctx.stroke();
  ctx.fillStyle = "#888";
  ctx.font = "10px sans-serif";
  ctx.fillText(String(Y_MAX), 1, pad + 4);
  ctx.fillText("0", 1, height - pad);

  const values = buffer.values();
  ctx.strokeStyle = "#2d7ff9";
  ctx.beginPath();
  if (values.length === 0) {
    ctx.moveTo(pad, yFor(0));
    ctx.lineTo(width - pad, yFor(0));
  } else {
    const capacity = buffer.sampleRate * buffer.seconds;
    for (let i = 0; i < values.length; i++) {
      const x = pad + (i / Math.max(capacity - 1, 1)) * plotW;
      if (i === 0) ctx.moveTo(x, yFor(values[i]));
      else ctx.lineTo(x, yFor(values[i]));
    }
  }
  ctx.stroke();
}
