import { readFileSync } from "node:fs";
import * as Papa from "papaparse";

export class MissingColumnError extends Error {
  readonly column: string;

  constructor(column: string, path: string) {
    super(`missing column '${column}' in ${path}`);
    this.column = column;
  }
}

export class CsvFormatError extends Error {}

export interface CsvTable {
  path: string;
  columns: string[];
  rows: Record<string, string>[];
}

/** Parse one CSV file and require the given columns to exist. */
export function readCsv(path: string, required: string[]): CsvTable {
  const text = readFileSync(path, "utf-8");
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0];
    throw new CsvFormatError(`${path}: ${first.message} (row ${first.row})`);
  }
  const columns = parsed.meta.fields ?? [];
  for (const column of required) {
    if (!columns.includes(column)) {
      throw new MissingColumnError(column, path);
    }
  }
  if (parsed.data.length === 0) {
    throw new CsvFormatError(`${path}: no data rows`);
  }
  return { path, columns, rows: parsed.data };
}

export function numeric(row: Record<string, string>, column: string, path: string): number {
  const value = Number(row[column]);
  if (!Number.isFinite(value)) {
    throw new CsvFormatError(`${path}: non-numeric value '${row[column]}' in column '${column}'`);
  }
  return value;
}
