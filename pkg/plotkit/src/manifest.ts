/** Manifest and estimator-report loading with schema validation. */

import { readFileSync } from "node:fs";
import { join } from "node:path";
import {
  DissipationReport,
  LyapunovReport,
  Manifest,
  MixingReport,
  SchemaError,
} from "./types.js";

function loadJson(path: string): Record<string, unknown> {
  let text: string;
  try {
    text = readFileSync(path, "utf8");
  } catch {
    throw new SchemaError(path, "(file)", `${path}: cannot read file`);
  }
  try {
    return JSON.parse(text) as Record<string, unknown>;
  } catch {
    throw new SchemaError(path, "(json)", `${path}: invalid JSON`);
  }
}

function requireField(path: string, obj: Record<string, unknown>, field: string): unknown {
  if (!(field in obj) || obj[field] === undefined) {
    throw new SchemaError(path, field);
  }
  return obj[field];
}

export function manifestDir(runDir: string, manifestId: string): string {
  return join(runDir, manifestId);
}

export function loadManifest(runDir: string, manifestId: string): Manifest {
  const path = join(manifestDir(runDir, manifestId), `${manifestId}_manifest.json`);
  const raw = loadJson(path);
  for (const field of ["schema_version", "manifest_id", "status", "config", "files"]) {
    requireField(path, raw, field);
  }
  const manifest = raw as unknown as Manifest;
  if (manifest.manifest_id !== manifestId) {
    throw new SchemaError(path, "manifest_id", `${path}: manifest_id does not match directory`);
  }
  if (manifest.status !== "complete") {
    throw new SchemaError(path, "status", `${path}: manifest status is '${manifest.status}', not complete`);
  }
  return manifest;
}

function loadReport(runDir: string, manifestId: string, name: string, kind: string): Record<string, unknown> {
  const path = join(manifestDir(runDir, manifestId), `${manifestId}_${name}.json`);
  const raw = loadJson(path);
  requireField(path, raw, "schema_version");
  if (requireField(path, raw, "kind") !== kind) {
    throw new SchemaError(path, "kind", `${path}: expected a ${kind} report`);
  }
  return raw;
}

export function loadMixingReport(runDir: string, manifestId: string): MixingReport {
  const raw = loadReport(runDir, manifestId, "mixing_report", "mixing");
  return raw as unknown as MixingReport;
}

export function loadDissipationReport(runDir: string, manifestId: string): DissipationReport {
  const raw = loadReport(runDir, manifestId, "dissipation_report", "dissipation");
  return raw as unknown as DissipationReport;
}

export function loadLyapunovReport(runDir: string, manifestId: string): LyapunovReport {
  const raw = loadReport(runDir, manifestId, "lyapunov_report", "lyapunov");
  return raw as unknown as LyapunovReport;
}

export function seriesPath(runDir: string, manifest: Manifest, kappaIndex: number, trajectory: number): string {
  const ki = String(kappaIndex).padStart(2, "0");
  const tr = String(trajectory).padStart(4, "0");
  const name = `${manifest.manifest_id}_k${ki}_t${tr}.csv`;
  if (!manifest.files.includes(name)) {
    throw new SchemaError(
      join(manifestDir(runDir, manifest.manifest_id), name),
      "files",
      `manifest ${manifest.manifest_id} does not list ${name}`,
    );
  }
  return join(manifestDir(runDir, manifest.manifest_id), name);
}

export function spectrumPath(runDir: string, manifest: Manifest, kappaIndex: number, trajectory: number): string {
  return seriesPath(runDir, manifest, kappaIndex, trajectory).replace(/\.csv$/, "_spectrum.csv");
}
