/** CSV reader for the run outputs: a header row plus %.17g floats.
 * Values are parsed as doubles; %.17g strings round-trip exactly. */

import { readFileSync } from "node:fs";
import { SchemaError } from "./types.js";

export interface CsvTable {
  path: string;
  columns: string[];
  rows: number[][];
}

export function readCsv(path: string): CsvTable {
  let text: string;
  try {
    text = readFileSync(path, "utf8");
  } catch {
    throw new SchemaError(path, "(file)", `${path}: cannot read file`);
  }
  const lines = text.split("\n").filter((l) => l.length > 0);
  if (lines.length < 1) {
    throw new SchemaError(path, "(header)", `${path}: empty CSV`);
  }
  const columns = lines[0].split(",");
  const rows: number[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length !== columns.length) {
      throw new SchemaError(path, `(row ${i})`, `${path}: row ${i} has ${parts.length} fields, expected ${columns.length}`);
    }
    const row = parts.map(Number);
    if (row.some((v) => Number.isNaN(v))) {
      throw new SchemaError(path, `(row ${i})`, `${path}: non-numeric value in row ${i}`);
    }
    rows.push(row);
  }
  return { path, columns, rows };
}

export function column(table: CsvTable, name: string): number[] {
  const j = table.columns.indexOf(name);
  if (j < 0) {
    throw new SchemaError(table.path, name, `${table.path}: missing column '${name}'`);
  }
  return table.rows.map((r) => r[j]);
}
