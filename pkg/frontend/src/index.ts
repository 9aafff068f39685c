/** TypeScript client for the robustinf `analyze` CLI.
 *
 * Tables cross the boundary exactly once (a Dataset handle serializes its
 * columns to CSV in a private workspace); every entry point then drives the
 * CLI and returns the parsed JSON report, so numerics are bit-identical to a
 * direct CLI run on the same inputs and seed.
 */

import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { ConfigError, HandleClosedError } from "./errors.js";
import { runAnalyze, runAnalyzeAsync } from "./runner.js";
import { tableToCsv, type Cell, type Table } from "./table.js";
import type {
  AnalysisSpec,
  MhtBlock,
  Report,
  ResampleBlock,
  RiBlock,
} from "./types.js";

export * from "./errors.js";
export type { Cell, Table } from "./table.js";
export * from "./types.js";

/**
 * A bound dataset: owns a workspace directory holding the serialized CSV.
 *
 * Lifetime is explicit: call close() when done; using a closed handle or
 * closing twice raises HandleClosedError rather than doing anything
 * undefined. Multiple analyses against one handle reuse the same file.
 */
export class Dataset {
  private workdir: string | null;
  private readonly csvFile: string;

  private constructor(workdir: string, csvFile: string) {
    this.workdir = workdir;
    this.csvFile = csvFile;
  }

  static fromTable(table: Table): Dataset {
    const workdir = mkdtempSync(join(tmpdir(), "robustinf-client-"));
    const csvFile = join(workdir, "data.csv");
    try {
      writeFileSync(csvFile, tableToCsv(table));
    } catch (err) {
      rmSync(workdir, { recursive: true, force: true });
      throw err;
    }
    return new Dataset(workdir, csvFile);
  }

  get closed(): boolean {
    return this.workdir === null;
  }

  /** Path of the serialized CSV (for diagnostics; owned by the handle). */
  get csvPath(): string {
    return this.csvFile;
  }

  close(): void {
    if (this.workdir === null) {
      throw new HandleClosedError("dataset handle closed twice");
    }
    rmSync(this.workdir, { recursive: true, force: true });
    this.workdir = null;
  }

  run(spec: AnalysisSpec): Report {
    if (this.workdir === null) {
      throw new HandleClosedError("dataset handle used after close");
    }
    return runAnalyze(this.workdir, this.csvFile, spec);
  }

  runAsync(spec: AnalysisSpec): Promise<Report> {
    if (this.workdir === null) {
      return Promise.reject(
        new HandleClosedError("dataset handle used after close"),
      );
    }
    return runAnalyzeAsync(this.workdir, this.csvFile, spec);
  }
}

function withDataset<T>(data: Dataset | Table, fn: (ds: Dataset) => T): T {
  if (data instanceof Dataset) {
    return fn(data);
  }
  const ds = Dataset.fromTable(data);
  try {
    return fn(ds);
  } finally {
    ds.close();
  }
}

/** Full pipeline: fit, variance, tests, optional MHT and resampling. */
export function analyze(data: Dataset | Table, spec: AnalysisSpec): Report {
  return withDataset(data, (ds) => ds.run(spec));
}

/** Async full pipeline; the spawned run does not block the event loop. */
export async function analyzeAsync(
  data: Dataset | Table,
  spec: AnalysisSpec,
): Promise<Report> {
  if (data instanceof Dataset) {
    return data.runAsync(spec);
  }
  const ds = Dataset.fromTable(data);
  try {
    return await ds.runAsync(spec);
  } finally {
    ds.close();
  }
}

/** Fit and test coefficients; returns the report restricted to the fit. */
export function fit(data: Dataset | Table, spec: AnalysisSpec) {
  const report = analyze(data, spec);
  return {
    coefficients: report.coefficients,
    fit: report.fit,
    vcov: report.vcov,
    diagnostics: report.diagnostics,
    warnings: report.warnings,
  };
}

/** The variance-covariance block alone (kind per spec.vcov). */
export function vcov(data: Dataset | Table, spec: AnalysisSpec) {
  return analyze(data, spec).vcov;
}

/** Multiple-testing correction over a family of outcomes. */
export function mht(data: Dataset | Table, spec: AnalysisSpec): MhtBlock {
  if (!spec.mht) {
    throw new ConfigError("mht() needs spec.mht", "config_error", 0);
  }
  const block = analyze(data, spec).mht;
  if (!block) {
    throw new ConfigError("report carried no mht block", "config_error", 0);
  }
  return block;
}

/** Bootstrap resampling (pairs, residual, wild, wild_cluster). */
export function bootstrap(data: Dataset | Table, spec: AnalysisSpec): ResampleBlock {
  if (!spec.resample || spec.resample.scheme === "ri") {
    throw new ConfigError(
      "bootstrap() needs spec.resample with a non-ri scheme",
      "config_error",
      0,
    );
  }
  const block = analyze(data, spec).resample;
  if (!block) {
    throw new ConfigError("report carried no resample block", "config_error", 0);
  }
  return block;
}

/** Randomization inference under the declared assignment scheme. */
export function ri(data: Dataset | Table, spec: AnalysisSpec): RiBlock {
  if (!spec.resample || spec.resample.scheme !== "ri") {
    throw new ConfigError(
      "ri() needs spec.resample with scheme 'ri'",
      "config_error",
      0,
    );
  }
  const block = analyze(data, spec).resample?.ri;
  if (!block) {
    throw new ConfigError("report carried no ri block", "config_error", 0);
  }
  return block;
}
