/** Spawning the analyze CLI and translating its exit-code contract. */

import { execFile, execFileSync } from "node:child_process";
import { readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { errorFromExit } from "./errors.js";
import type { AnalysisSpec, Report } from "./types.js";

/** Binary to spawn; override with ROBUSTINF_ANALYZE_BIN. */
export function analyzeBinary(): string {
  return process.env.ROBUSTINF_ANALYZE_BIN ?? "analyze";
}

export function specToConfig(
  spec: AnalysisSpec,
  csvPath: string,
  reportPath: string,
): Record<string, unknown> {
  const config: Record<string, unknown> = {
    input: csvPath,
    outcome: spec.outcome,
    covariates: spec.covariates,
    // timestamps are always disabled so identical calls are byte-identical
    output: { path: reportPath, timestamp: false },
  };
  if (spec.intercept !== undefined) config.intercept = spec.intercept;
  if (spec.treatment !== undefined) config.treatment = spec.treatment;
  if (spec.clusters !== undefined) config.clusters = spec.clusters;
  if (spec.vcov !== undefined) config.vcov = spec.vcov;
  if (spec.alpha !== undefined) config.alpha = spec.alpha;
  if (spec.assumptions !== undefined) config.assumptions = spec.assumptions;
  if (spec.collapsePeriods !== undefined) {
    config.collapse_periods = spec.collapsePeriods;
  }
  if (spec.mht !== undefined) {
    const m: Record<string, unknown> = {
      method: spec.mht.method,
      family: spec.mht.family,
    };
    if (spec.mht.target !== undefined) m.target = spec.mht.target;
    if (spec.mht.seed !== undefined) m.seed = spec.mht.seed;
    if (spec.mht.replications !== undefined) m.replications = spec.mht.replications;
    if (spec.mht.seKind !== undefined) m.se_kind = spec.mht.seKind;
    if (spec.mht.scheme !== undefined) m.scheme = spec.mht.scheme;
    if (spec.mht.workers !== undefined) m.workers = spec.mht.workers;
    config.mht = m;
  }
  if (spec.resample !== undefined) {
    const r: Record<string, unknown> = {
      scheme: spec.resample.scheme,
      replications: spec.resample.replications,
      seed: spec.resample.seed,
    };
    if (spec.resample.wildWeights !== undefined) r.wild_weights = spec.resample.wildWeights;
    if (spec.resample.nullCoefficient !== undefined) {
      r.null_coefficient = spec.resample.nullCoefficient;
    }
    if (spec.resample.nullValue !== undefined) r.null_value = spec.resample.nullValue;
    if (spec.resample.assignment !== undefined) r.assignment = spec.resample.assignment;
    if (spec.resample.bernoulliP !== undefined) r.bernoulli_p = spec.resample.bernoulliP;
    if (spec.resample.exhaustiveThreshold !== undefined) {
      r.exhaustive_threshold = spec.resample.exhaustiveThreshold;
    }
    if (spec.resample.seKind !== undefined) r.se_kind = spec.resample.seKind;
    if (spec.resample.workers !== undefined) r.workers = spec.resample.workers;
    if (spec.resample.target !== undefined) r.target = spec.resample.target;
    config.resample = r;
  }
  return config;
}

let callCounter = 0;

function prepareCall(workdir: string, csvPath: string, spec: AnalysisSpec) {
  const id = ++callCounter;
  const configPath = join(workdir, `config-${id}.json`);
  const reportPath = join(workdir, `report-${id}.json`);
  writeFileSync(configPath, JSON.stringify(specToConfig(spec, csvPath, reportPath)));
  return { configPath, reportPath };
}

/** Run one analysis in ``workdir`` against an already-serialized CSV. */
export function runAnalyze(
  workdir: string,
  csvPath: string,
  spec: AnalysisSpec,
): Report {
  const { configPath, reportPath } = prepareCall(workdir, csvPath, spec);
  try {
    execFileSync(analyzeBinary(), ["--config", configPath], {
      encoding: "utf8",
      stdio: ["ignore", "pipe", "pipe"],
    });
  } catch (err) {
    const e = err as { status?: number | null; stderr?: string | Buffer };
    const status = typeof e.status === "number" ? e.status : -1;
    const stderr = e.stderr === undefined ? "" : e.stderr.toString();
    throw errorFromExit(status, stderr);
  }
  // the report is parsed from the CLI's own bytes, so every numeric field
  // is bit-identical to what a direct CLI invocation would yield
  return JSON.parse(readFileSync(reportPath, "utf8")) as Report;
}

/** Async variant: long resampling runs never block the host's event loop. */
export function runAnalyzeAsync(
  workdir: string,
  csvPath: string,
  spec: AnalysisSpec,
): Promise<Report> {
  const { configPath, reportPath } = prepareCall(workdir, csvPath, spec);
  return new Promise((resolve, reject) => {
    execFile(
      analyzeBinary(),
      ["--config", configPath],
      { encoding: "utf8" },
      (err, _stdout, stderr) => {
        if (err) {
          const status =
            typeof (err as { code?: unknown }).code === "number"
              ? ((err as { code?: number }).code as number)
              : -1;
          reject(errorFromExit(status, stderr ?? ""));
          return;
        }
        resolve(JSON.parse(readFileSync(reportPath, "utf8")) as Report);
      },
    );
  });
}
