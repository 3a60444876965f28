/**
 * Strict reader for the plain comma-separated tables written by the
 * simulation toolkit: one header row, numeric cells, no quoting.
 */

import { readFileSync } from "fs";

export interface Table {
  columns: string[];
  rows: number[][];
}

export class MissingColumnError extends Error {
  constructor(public readonly column: string, public readonly path: string) {
    super(`table ${path} is missing required column '${column}'`);
  }
}

export function parseCsv(text: string, path = "<inline>"): Table {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new Error(`table ${path} is empty`);
  }
  const columns = lines[0].split(",").map((c) => c.trim());
  const rows: number[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells.length !== columns.length) {
      throw new Error(
        `table ${path} row ${i} has ${cells.length} cells, expected ${columns.length}`,
      );
    }
    rows.push(cells.map((c) => Number(c)));
  }
  return { columns, rows };
}

export function readTable(path: string): Table {
  return parseCsv(readFileSync(path, "utf8"), path);
}

/** Column values by name; throws MissingColumnError when absent. */
export function column(table: Table, name: string, path = "<table>"): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new MissingColumnError(name, path);
  }
  return table.rows.map((r) => r[idx]);
}

export function requireColumns(table: Table, names: string[], path: string): void {
  for (const name of names) {
    if (!table.columns.includes(name)) {
      throw new MissingColumnError(name, path);
    }
  }
}
