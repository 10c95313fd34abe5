/**
 * Small deterministic SVG scene builder.
 *
 * Figures must regenerate byte for byte from the same inputs, so there is
 * no layout engine and no environment lookup here: fixed canvas, fixed
 * styles, fixed number formatting, elements emitted in insertion order.
 */

export const WIDTH = 640;
export const HEIGHT = 420;
export const MARGIN = { left: 78, right: 24, top: 42, bottom: 64 };

export const PLOT = {
  x0: MARGIN.left,
  x1: WIDTH - MARGIN.right,
  y0: MARGIN.top,
  y1: HEIGHT - MARGIN.bottom,
};

const FONT = "DejaVu Sans, sans-serif";

/** Fixed-precision coordinate: two decimals, no negative zero. */
export function px(v: number): string {
  const s = v.toFixed(2);
  return s === "-0.00" ? "0.00" : s;
}

/** Human-facing number: up to `digits` significant figures, no exponent
 * clutter for the magnitudes that occur on these axes. */
export function fmt(v: number, digits = 3): string {
  if (!Number.isFinite(v)) {
    return "n/a";
  }
  if (v === 0) {
    return "0";
  }
  const a = Math.abs(v);
  if (a >= 1e-4 && a < 1e6) {
    const s = v.toPrecision(digits);
    return s.includes(".")
      ? s.replace(/0+$/, "").replace(/\.$/, "")
      : s;
  }
  return v.toExponential(Math.max(digits - 1, 0)).replace("e", " e");
}

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}

export class Scene {
  private parts: string[] = [];

  line(x1: number, y1: number, x2: number, y2: number, stroke: string,
       width = 1, dash?: string): void {
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(
      `<line x1="${px(x1)}" y1="${px(y1)}" x2="${px(x2)}" y2="${px(y2)}"` +
      ` stroke="${stroke}" stroke-width="${width}"${d}/>`);
  }

  circle(cx: number, cy: number, r: number, fill: string): void {
    this.parts.push(
      `<circle cx="${px(cx)}" cy="${px(cy)}" r="${r}" fill="${fill}"/>`);
  }

  rect(x: number, y: number, w: number, h: number, fill: string): void {
    this.parts.push(
      `<rect x="${px(x)}" y="${px(y)}" width="${px(w)}"` +
      ` height="${px(h)}" fill="${fill}"/>`);
  }

  text(x: number, y: number, content: string, size = 12,
       anchor: "start" | "middle" | "end" = "start",
       fill = "#1a1a1a"): void {
    this.parts.push(
      `<text x="${px(x)}" y="${px(y)}" font-family="${FONT}"` +
      ` font-size="${size}" text-anchor="${anchor}" fill="${fill}">` +
      `${esc(content)}</text>`);
  }

  render(): string {
    return [
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}"` +
      ` height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`,
      `<rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>`,
      ...this.parts,
      "</svg>",
      "",
    ].join("\n");
  }
}

/** Map a value in [lo, hi] (log or linear) onto a pixel range. */
export class Axis {
  constructor(
    readonly lo: number,
    readonly hi: number,
    readonly pxLo: number,
    readonly pxHi: number,
    readonly log: boolean,
  ) {}

  place(v: number): number {
    const t = this.log
      ? (Math.log(v) - Math.log(this.lo)) /
        (Math.log(this.hi) - Math.log(this.lo))
      : (v - this.lo) / (this.hi - this.lo);
    return this.pxLo + t * (this.pxHi - this.pxLo);
  }
}

/** Log-scale padding: extend the range by a fixed factor on both sides. */
export function padLog(lo: number, hi: number, factor = 1.35): [number, number] {
  return [lo / factor, hi * factor];
}

export function padLinear(lo: number, hi: number, frac = 0.08): [number, number] {
  if (lo === hi) {
    const step = Math.max(Math.abs(lo) * 0.5, 0.5);
    return [lo - step, hi + step];
  }
  const pad = (hi - lo) * frac;
  return [lo - pad, hi + pad];
}

/** Round tick positions for a linear axis: 5 evenly spaced values. */
export function linearTicks(lo: number, hi: number, n = 5): number[] {
  const ticks: number[] = [];
  for (let i = 0; i < n; i++) {
    ticks.push(lo + ((hi - lo) * i) / (n - 1));
  }
  return ticks;
}
