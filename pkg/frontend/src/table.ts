/** Column-major tables and their one-time serialization to RFC-4180 CSV.
 *
 * The boundary makes exactly one explicit copy: a handle serializes its
 * columns to a CSV file once, and every call against the handle reuses that
 * file. Numbers are written with JavaScript's shortest-round-trip formatting,
 * which the core parses back to the identical double.
 */

import { DataError } from "./errors.js";

export type Cell = number | string | null | undefined;

/** Column name -> column values; all columns must have equal length. */
export type Table = Record<string, readonly Cell[]>;

function escapeField(field: string): string {
  if (/[",\r\n]/.test(field)) {
    return '"' + field.replace(/"/g, '""') + '"';
  }
  return field;
}

function cellToString(cell: Cell): string {
  if (cell === null || cell === undefined) {
    return ""; // missing: the core drops and counts the row
  }
  if (typeof cell === "number") {
    return Number.isFinite(cell) ? String(cell) : "";
  }
  return escapeField(cell);
}

export function tableToCsv(table: Table): string {
  const names = Object.keys(table);
  if (names.length === 0) {
    throw new DataError("table has no columns", "empty_table", 0);
  }
  const first = table[names[0]!]!;
  for (const name of names) {
    if (table[name]!.length !== first.length) {
      throw new DataError(
        `column ${JSON.stringify(name)} has length ${table[name]!.length}, expected ${first.length}`,
        "ragged_table",
        0,
      );
    }
  }
  const lines = [names.map(escapeField).join(",")];
  for (let i = 0; i < first.length; i++) {
    lines.push(names.map((name) => cellToString(table[name]![i])).join(","));
  }
  return lines.join("\n") + "\n";
}
