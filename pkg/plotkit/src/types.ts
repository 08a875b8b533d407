/** Figure specifications and the run-output schemas this tool consumes. */

export type FigureKind = "decay" | "scaling" | "spectrum" | "moment_lyap";

export interface FigureOptions {
  title?: string;
  width?: number;
  height?: number;
  /** decay: which norm column to plot (default "Hm1") */
  norm?: "L2" | "H1" | "Hm1";
  /** decay/spectrum: which kappa index / trajectory the panel shows */
  kappa_index?: number;
  trajectory?: number;
  /** spectrum: reference power-law exponent (default -d from the manifest) */
  reference_exponent?: number;
}

export interface FigureSpec {
  kind: FigureKind;
  /** root output directory of the runs (each manifest lives in <run_dir>/<id>/) */
  run_dir: string;
  manifest_ids: string[];
  /** output SVG path; the sidecar JSON lands at <output>.json */
  output: string;
  options?: FigureOptions;
}

export interface Manifest {
  schema_version: number;
  manifest_id: string;
  kind: string;
  status: string;
  config: { model: { d: number } } & Record<string, unknown>;
  series_files: string[];
  files: string[];
}

export interface DecayFitRecord {
  rate: number;
  log_prefactor: number;
  window: [number, number];
  stderr_rate: number;
  r_squared: number;
}

export interface MixingReport {
  schema_version: number;
  kind: "mixing";
  norm: string;
  kappas: { kappa: number; rate: number; rate_stderr: number; fits: DecayFitRecord[] }[];
}

export interface DissipationReport {
  schema_version: number;
  kind: "dissipation";
  taus: { kappa: number; trajectory: number; tau_star: number | null }[];
  scaling?: { slope: number; intercept: number; r_squared: number; delta_lower_bound: number };
}

export interface LyapunovReport {
  schema_version: number;
  kind: "lyapunov";
  kappas: {
    kappa: number;
    lambda1: number;
    lambda1_stderr: number;
    moments: { p: number; value: number; stderr: number }[];
  }[];
}

export class SchemaError extends Error {
  constructor(public readonly path: string, public readonly field: string, message?: string) {
    super(message ?? `${path}: schema mismatch at field '${field}'`);
  }
}
