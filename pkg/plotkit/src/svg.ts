/** Minimal deterministic SVG scene builder: axes, ticks, polylines, markers.
 * No timestamps and no randomness, so identical inputs give identical bytes. */

export type ScaleKind = "linear" | "log";

export interface Scale {
  kind: ScaleKind;
  domain: [number, number];
  range: [number, number];
}

export function makeScale(kind: ScaleKind, domain: [number, number], range: [number, number]): Scale {
  let [lo, hi] = domain;
  if (kind === "log" && (lo <= 0 || hi <= 0)) {
    throw new Error(`log scale needs a positive domain, got [${lo}, ${hi}]`);
  }
  if (lo === hi) {
    lo = lo - (lo === 0 ? 1 : Math.abs(lo) * 0.5);
    hi = hi + (hi === 0 ? 1 : Math.abs(hi) * 0.5);
  }
  return { kind, domain: [lo, hi], range };
}

export function project(s: Scale, v: number): number {
  const [d0, d1] = s.domain;
  const [r0, r1] = s.range;
  const t = s.kind === "log" ? (Math.log(v) - Math.log(d0)) / (Math.log(d1) - Math.log(d0)) : (v - d0) / (d1 - d0);
  return r0 + t * (r1 - r0);
}

export function ticks(s: Scale, target = 6): number[] {
  const [lo, hi] = s.domain;
  if (s.kind === "log") {
    const e0 = Math.ceil(Math.log10(lo) - 1e-12);
    const e1 = Math.floor(Math.log10(hi) + 1e-12);
    const out: number[] = [];
    const stride = Math.max(1, Math.ceil((e1 - e0 + 1) / target));
    for (let e = e0; e <= e1; e += stride) out.push(Math.pow(10, e));
    return out.length >= 2 ? out : [lo, hi];
  }
  const span = hi - lo;
  const raw = span / target;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((st) => span / st <= target) ?? 10 * mag;
  const start = Math.ceil(lo / step) * step;
  const out: number[] = [];
  for (let v = start; v <= hi + 1e-9 * span; v += step) out.push(Math.abs(v) < 1e-12 * span ? 0 : v);
  return out;
}

function fmtTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(0).replace("+", "");
  return String(Math.round(v * 1e6) / 1e6);
}

const px = (v: number) => String(Math.round(v * 100) / 100);

export class SvgCanvas {
  private parts: string[] = [];

  constructor(public readonly width: number, public readonly height: number) {}

  line(x1: number, y1: number, x2: number, y2: number, stroke = "#000", strokeWidth = 1, dash = ""): void {
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(
      `<line x1="${px(x1)}" y1="${px(y1)}" x2="${px(x2)}" y2="${px(y2)}" stroke="${stroke}" stroke-width="${strokeWidth}"${d}/>`,
    );
  }

  polyline(points: [number, number][], stroke: string, strokeWidth = 1.5, dash = ""): void {
    const pts = points.map(([x, y]) => `${px(x)},${px(y)}`).join(" ");
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(`<polyline points="${pts}" fill="none" stroke="${stroke}" stroke-width="${strokeWidth}"${d}/>`);
  }

  circle(x: number, y: number, r: number, fill: string): void {
    this.parts.push(`<circle cx="${px(x)}" cy="${px(y)}" r="${r}" fill="${fill}"/>`);
  }

  text(x: number, y: number, content: string, size = 11, anchor = "start", fill = "#222", rotate = 0): void {
    const transform = rotate ? ` transform="rotate(${rotate} ${px(x)} ${px(y)})"` : "";
    this.parts.push(
      `<text x="${px(x)}" y="${px(y)}" font-size="${size}" font-family="sans-serif" text-anchor="${anchor}" fill="${fill}"${transform}>${escapeXml(content)}</text>`,
    );
  }

  render(): string {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" height="${this.height}" viewBox="0 0 ${this.width} ${this.height}">\n` +
      `<rect width="${this.width}" height="${this.height}" fill="#fff"/>\n` +
      this.parts.join("\n") +
      "\n</svg>\n"
    );
  }
}

function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export interface Axes {
  canvas: SvgCanvas;
  x: Scale;
  y: Scale;
  plot: { left: number; top: number; right: number; bottom: number };
}

export function makeAxes(
  width: number,
  height: number,
  xKind: ScaleKind,
  yKind: ScaleKind,
  xDomain: [number, number],
  yDomain: [number, number],
  xLabel: string,
  yLabel: string,
  title: string,
): Axes {
  const margin = { left: 64, right: 16, top: 30, bottom: 42 };
  const canvas = new SvgCanvas(width, height);
  const plot = { left: margin.left, top: margin.top, right: width - margin.right, bottom: height - margin.bottom };
  const x = makeScale(xKind, xDomain, [plot.left, plot.right]);
  const y = makeScale(yKind, yDomain, [plot.bottom, plot.top]);
  canvas.line(plot.left, plot.bottom, plot.right, plot.bottom);
  canvas.line(plot.left, plot.bottom, plot.left, plot.top);
  for (const t of ticks(x)) {
    const xpix = project(x, t);
    canvas.line(xpix, plot.bottom, xpix, plot.bottom + 4);
    canvas.text(xpix, plot.bottom + 16, fmtTick(t), 10, "middle");
  }
  for (const t of ticks(y)) {
    const ypix = project(y, t);
    canvas.line(plot.left - 4, ypix, plot.left, ypix);
    canvas.text(plot.left - 6, ypix + 3, fmtTick(t), 10, "end");
  }
  canvas.text((plot.left + plot.right) / 2, height - 8, xLabel, 12, "middle");
  canvas.text(14, (plot.top + plot.bottom) / 2, yLabel, 12, "middle", "#222", -90);
  canvas.text((plot.left + plot.right) / 2, 18, title, 13, "middle");
  return { canvas, x, y, plot };
}
