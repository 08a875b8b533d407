#!/usr/bin/env node
/** lagmix-plot <spec.json>: render one figure and its sidecar JSON. */

import { readFileSync, writeFileSync, mkdirSync } from "node:fs";
import { dirname, resolve } from "node:path";
import { renderFigure } from "./figures.js";
import { FigureSpec, SchemaError } from "./types.js";

const KINDS = ["decay", "scaling", "spectrum", "moment_lyap"];

export function loadSpec(path: string): FigureSpec {
  let raw: Record<string, unknown>;
  try {
    raw = JSON.parse(readFileSync(path, "utf8")) as Record<string, unknown>;
  } catch {
    throw new SchemaError(path, "(json)", `${path}: cannot read figure spec`);
  }
  for (const field of ["kind", "run_dir", "manifest_ids", "output"]) {
    if (!(field in raw)) throw new SchemaError(path, field);
  }
  if (!KINDS.includes(raw.kind as string)) {
    throw new SchemaError(path, "kind", `${path}: kind must be one of ${KINDS.join(", ")}`);
  }
  if (!Array.isArray(raw.manifest_ids) || raw.manifest_ids.length === 0) {
    throw new SchemaError(path, "manifest_ids", `${path}: manifest_ids must be a non-empty list`);
  }
  const spec = raw as unknown as FigureSpec;
  // paths inside the spec resolve relative to the spec file
  const base = dirname(resolve(path));
  return { ...spec, run_dir: resolve(base, spec.run_dir), output: resolve(base, spec.output) };
}

export function runSpec(path: string): string {
  const spec = loadSpec(path);
  const result = renderFigure(spec);
  mkdirSync(dirname(spec.output), { recursive: true });
  writeFileSync(spec.output, result.svg);
  writeFileSync(spec.output + ".json", JSON.stringify(result.sidecar, null, 2) + "\n");
  return spec.output;
}

function main(argv: string[]): number {
  if (argv.length !== 1 || argv[0] === "--help") {
    console.error("usage: lagmix-plot <spec.json>");
    return argv[0] === "--help" ? 0 : 2;
  }
  try {
    const out = runSpec(argv[0]);
    console.log(`wrote ${out} and ${out}.json`);
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`schema error: ${err.message}`);
      return 2;
    }
    throw err;
  }
}

if (process.argv[1] && resolve(process.argv[1]) === resolve(new URL(import.meta.url).pathname)) {
  process.exit(main(process.argv.slice(2)));
}
