/** The four figure kinds. Every plotted number is lifted verbatim from the
 * run outputs into the sidecar; this layer never recomputes statistics. */

import { column, readCsv } from "./csv.js";
import {
  loadDissipationReport,
  loadLyapunovReport,
  loadManifest,
  loadMixingReport,
  seriesPath,
  spectrumPath,
} from "./manifest.js";
import { Axes, makeAxes, project } from "./svg.js";
import { FigureSpec, Manifest, SchemaError } from "./types.js";

export interface RenderResult {
  svg: string;
  sidecar: Record<string, unknown>;
}

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

function firstManifest(spec: FigureSpec): Manifest {
  if (!spec.manifest_ids.length) {
    throw new SchemaError(spec.output, "manifest_ids", "figure spec lists no manifest IDs");
  }
  const manifests = spec.manifest_ids.map((id) => loadManifest(spec.run_dir, id));
  return manifests[0];
}

function finite(values: number[], path: string, field: string): number[] {
  if (!values.length) throw new SchemaError(path, field, `${path}: no data for '${field}'`);
  return values;
}

export function renderDecay(spec: FigureSpec): RenderResult {
  const manifest = firstManifest(spec);
  const opt = spec.options ?? {};
  const ki = opt.kappa_index ?? 0;
  const traj = opt.trajectory ?? 0;
  const normName = opt.norm ?? "Hm1";
  const csvPath = seriesPath(spec.run_dir, manifest, ki, traj);
  const table = readCsv(csvPath);
  const t = finite(column(table, "t"), csvPath, "t");
  const norm = finite(column(table, normName), csvPath, normName);
  const report = loadMixingReport(spec.run_dir, manifest.manifest_id);
  if (ki >= report.kappas.length || traj >= report.kappas[ki].fits.length) {
    throw new SchemaError(csvPath, "fits", "mixing report does not cover the requested panel");
  }
  const fit = report.kappas[ki].fits[traj];
  const kappa = report.kappas[ki].kappa;

  const pos = norm.map((v, i) => [t[i], v] as [number, number]).filter(([, v]) => v > 0);
  const yvals = pos.map(([, v]) => v);
  const axes = makeAxes(
    opt.width ?? 560,
    opt.height ?? 380,
    "linear",
    "log",
    [Math.min(...t), Math.max(...t)],
    [Math.min(...yvals), Math.max(...yvals)],
    "t",
    normName === "Hm1" ? "negative-Sobolev norm" : `${normName} norm`,
    opt.title ?? `decay, kappa = ${kappa}`,
  );
  axes.canvas.polyline(
    pos.map(([tt, v]) => [project(axes.x, tt), project(axes.y, v)]),
    PALETTE[0],
  );
  // fit overlay exp(log_prefactor - rate t) across the fitted window
  const [w0, w1] = fit.window;
  const overlay: [number, number][] = [];
  for (let i = 0; i <= 40; i++) {
    const tt = w0 + ((w1 - w0) * i) / 40;
    overlay.push([project(axes.x, tt), project(axes.y, Math.exp(fit.log_prefactor - fit.rate * tt))]);
  }
  axes.canvas.polyline(overlay, PALETTE[1], 1.5, "6 3");
  axes.canvas.text(axes.plot.right - 6, axes.plot.top + 14, `rate = ${fit.rate} (r2 = ${fit.r_squared})`, 11, "end");

  return {
    svg: axes.canvas.render(),
    sidecar: {
      kind: "decay",
      manifest_id: manifest.manifest_id,
      source_csv: csvPath,
      kappa,
      norm: normName,
      t,
      values: norm,
      fit: {
        rate: fit.rate,
        log_prefactor: fit.log_prefactor,
        window: fit.window,
        stderr_rate: fit.stderr_rate,
        r_squared: fit.r_squared,
      },
    },
  };
}

export function renderScaling(spec: FigureSpec): RenderResult {
  const manifest = firstManifest(spec);
  const opt = spec.options ?? {};
  const report = loadDissipationReport(spec.run_dir, manifest.manifest_id);
  const reached = report.taus.filter((r) => r.tau_star !== null) as {
    kappa: number;
    trajectory: number;
    tau_star: number;
  }[];
  if (!reached.length) {
    throw new SchemaError(spec.output, "taus", "dissipation report has no crossings to plot");
  }
  const xs = reached.map((r) => Math.abs(Math.log(r.kappa)));
  const ys = reached.map((r) => r.tau_star);
  const axes = makeAxes(
    opt.width ?? 560,
    opt.height ?? 380,
    "linear",
    "linear",
    [0, Math.max(...xs) * 1.05],
    [0, Math.max(...ys) * 1.08],
    "|log kappa|",
    "tau*",
    opt.title ?? "dissipation time vs |log kappa|",
  );
  for (let i = 0; i < xs.length; i++) {
    axes.canvas.circle(project(axes.x, xs[i]), project(axes.y, ys[i]), 3.5, PALETTE[0]);
  }
  let scaling = null;
  if (report.scaling) {
    scaling = report.scaling;
    const [x0, x1] = axes.x.domain;
    const line: [number, number][] = [x0, x1].map((xv) => [
      project(axes.x, xv),
      project(axes.y, scaling!.slope * xv + scaling!.intercept),
    ]);
    axes.canvas.polyline(line, PALETTE[1], 1.5, "6 3");
    axes.canvas.text(
      axes.plot.left + 8,
      axes.plot.top + 14,
      `slope = ${scaling.slope} (r2 = ${scaling.r_squared})`,
      11,
    );
  }
  return {
    svg: axes.canvas.render(),
    sidecar: {
      kind: "scaling",
      manifest_id: manifest.manifest_id,
      points: reached.map((r) => ({ kappa: r.kappa, trajectory: r.trajectory, tau_star: r.tau_star })),
      scaling,
    },
  };
}

export function renderSpectrum(spec: FigureSpec): RenderResult {
  const manifest = firstManifest(spec);
  const opt = spec.options ?? {};
  const ki = opt.kappa_index ?? 0;
  const traj = opt.trajectory ?? 0;
  const csvPath = spectrumPath(spec.run_dir, manifest, ki, traj);
  const table = readCsv(csvPath);
  const shells = finite(column(table, "shell"), csvPath, "shell");
  const energy = finite(column(table, "energy"), csvPath, "energy");
  const pts = shells
    .map((s, i) => [s, energy[i]] as [number, number])
    .filter(([s, e]) => s > 0 && e > 0);
  if (!pts.length) {
    throw new SchemaError(csvPath, "energy", `${csvPath}: spectrum has no positive shells`);
  }
  const d = manifest.config.model.d;
  const exponent = opt.reference_exponent ?? -d;
  const axes = makeAxes(
    opt.width ?? 560,
    opt.height ?? 380,
    "log",
    "log",
    [pts[0][0], pts[pts.length - 1][0]],
    [Math.min(...pts.map(([, e]) => e)), Math.max(...pts.map(([, e]) => e))],
    "shell |k|",
    "E(k)",
    opt.title ?? "scalar variance spectrum",
  );
  axes.canvas.polyline(
    pts.map(([s, e]) => [project(axes.x, s), project(axes.y, e)]),
    PALETTE[0],
  );
  for (const [s, e] of pts) axes.canvas.circle(project(axes.x, s), project(axes.y, e), 2.2, PALETTE[0]);
  // reference slope anchored at the peak shell (geometry only)
  const anchor = pts.reduce((a, b) => (b[1] > a[1] ? b : a));
  const line: [number, number][] = [];
  for (const s of [anchor[0], pts[pts.length - 1][0]]) {
    line.push([project(axes.x, s), project(axes.y, anchor[1] * Math.pow(s / anchor[0], exponent))]);
  }
  axes.canvas.polyline(line, "#555", 1.2, "4 3");
  axes.canvas.text(axes.plot.right - 6, axes.plot.top + 14, `reference slope k^${exponent}`, 11, "end");
  return {
    svg: axes.canvas.render(),
    sidecar: {
      kind: "spectrum",
      manifest_id: manifest.manifest_id,
      source_csv: csvPath,
      shells,
      energy,
      reference: { exponent, anchor_shell: anchor[0], anchor_value: anchor[1] },
    },
  };
}

export function renderMomentLyap(spec: FigureSpec): RenderResult {
  const manifest = firstManifest(spec);
  const opt = spec.options ?? {};
  const report = loadLyapunovReport(spec.run_dir, manifest.manifest_id);
  if (!report.kappas.length) {
    throw new SchemaError(spec.output, "kappas", "lyapunov report has no entries");
  }
  const allP = report.kappas.flatMap((e) => e.moments.map((m) => m.p));
  const allV = report.kappas.flatMap((e) => e.moments.map((m) => m.value));
  const axes = makeAxes(
    opt.width ?? 560,
    opt.height ?? 380,
    "linear",
    "linear",
    [0, Math.max(...allP) * 1.08],
    [Math.min(0, ...allV), Math.max(...allV) * 1.15],
    "p",
    "moment exponent",
    opt.title ?? "moment Lyapunov exponents",
  );
  report.kappas.forEach((entry, idx) => {
    const color = PALETTE[idx % PALETTE.length];
    const pts = [...entry.moments].sort((a, b) => a.p - b.p);
    const line: [number, number][] = [[project(axes.x, 0), project(axes.y, 0)]];
    for (const m of pts) {
      const x = project(axes.x, m.p);
      const y = project(axes.y, m.value);
      line.push([x, y]);
      axes.canvas.circle(x, y, 3, color);
      axes.canvas.line(x, project(axes.y, m.value - m.stderr), x, project(axes.y, m.value + m.stderr), color, 1);
    }
    axes.canvas.polyline(line, color);
    axes.canvas.text(axes.plot.right - 6, axes.plot.top + 14 + 13 * idx, `kappa = ${entry.kappa}`, 11, "end", color);
  });
  return {
    svg: axes.canvas.render(),
    sidecar: {
      kind: "moment_lyap",
      manifest_id: manifest.manifest_id,
      kappas: report.kappas.map((e) => ({
        kappa: e.kappa,
        lambda1: e.lambda1,
        lambda1_stderr: e.lambda1_stderr,
        moments: e.moments.map((m) => ({ p: m.p, value: m.value, stderr: m.stderr })),
      })),
    },
  };
}

export function renderFigure(spec: FigureSpec): RenderResult {
  switch (spec.kind) {
    case "decay":
      return renderDecay(spec);
    case "scaling":
      return renderScaling(spec);
    case "spectrum":
      return renderSpectrum(spec);
    case "moment_lyap":
      return renderMomentLyap(spec);
    default:
      throw new SchemaError(spec.output, "kind", `unknown figure kind '${(spec as FigureSpec).kind}'`);
  }
}
