/** Report and configuration shapes mirroring the CLI's JSON schema. */

export type VcovKind =
  | "conventional"
  | "hc0"
  | "hc1"
  | "hc2"
  | "hc3"
  | "hc2_bm"
  | "cluster"
  | "multiway"
  | "max_se";

export type MhtMethod = "bonferroni" | "holm" | "wy" | "rw" | "bh" | "bky";

export type ResampleScheme = "pairs" | "residual" | "wild" | "wild_cluster" | "ri";

export interface MhtSpec {
  method: MhtMethod;
  /** Outcome columns forming one family. */
  family: string[];
  /** Coefficient under test; defaults to the treatment column. */
  target?: string;
  /** Required for wy/rw (seeds are mandatory for resampling). */
  seed?: number;
  replications?: number;
  seKind?: string;
  scheme?: Exclude<ResampleScheme, "pairs">;
  workers?: number;
}

export interface ResampleSpec {
  scheme: ResampleScheme;
  replications: number;
  seed: number;
  wildWeights?: "rademacher" | "mammen" | "webb";
  nullCoefficient?: string;
  nullValue?: number;
  assignment?: "complete" | "bernoulli" | "cluster";
  bernoulliP?: number;
  exhaustiveThreshold?: number;
  seKind?: string;
  workers?: number;
  target?: string;
}

export interface AnalysisSpec {
  outcome: string;
  covariates: string[];
  intercept?: boolean;
  treatment?: string;
  clusters?: string[];
  vcov?: VcovKind;
  alpha?: number;
  mht?: MhtSpec;
  resample?: ResampleSpec;
  collapsePeriods?: { unit: string; period: string; cutoff: number };
  assumptions?: string;
}

export interface CoefficientRow {
  name: string;
  estimate: number;
  se: number;
  statistic: number;
  dof: number;
  p_value: number;
  ci_low: number;
  ci_high: number;
}

export interface VcovBlock {
  kind: string;
  dof: number[];
  cluster_counts: Record<string, number>;
  eigenvalue_fix: boolean;
  notes: string[];
  matrix: number[][];
}

export interface MhtResultRow {
  id: string;
  raw_p: number;
  adjusted_p: number;
  rejected: boolean;
}

export interface MhtBlock {
  method: string;
  error_rate: "FWER" | "FDR";
  alpha: number;
  target: string;
  results: MhtResultRow[];
  notes: string[];
}

export interface RiBlock {
  p_value: number;
  observed: number;
  exhaustive: boolean;
  n_draws: number;
  n_degenerate_skipped: number;
  assignment: string;
  treated_count: number;
  notes: string[];
  null_distribution_histogram: { bin_edges: number[]; counts: number[] };
}

export interface BootstrapTBlock {
  coefficient: string;
  estimate: number;
  se: number;
  t_observed: number;
  critical_value: number;
  p_value: number;
  ci_low: number;
  ci_high: number;
  center: string;
}

export interface ResampleBlock {
  scheme: string;
  replications: number;
  seed: number;
  workers: number;
  coefficients?: Record<
    string,
    { bootstrap_se: number; percentile_ci?: [number, number] }
  >;
  n_redraws?: number;
  bootstrap_t?: BootstrapTBlock;
  ri?: RiBlock;
  notes?: string[];
  null_distribution_histogram?: { bin_edges: number[]; counts: number[] };
}

export interface Report {
  tool: { name: string; version: string };
  config: Record<string, unknown>;
  data: {
    n_rows_read: number;
    n_rows_used: number;
    n_dropped: number;
    dropped_by_column: Record<string, number>;
    cluster_label_maps: Record<string, Record<string, number>>;
  };
  fit: { n: number; k: number; sigma2_hat: number; columns: string[] };
  vcov: VcovBlock;
  coefficients: CoefficientRow[];
  diagnostics: Record<string, unknown>;
  assumption_statement: { text: string; source: "user" | "template" };
  warnings: string[];
  mht?: MhtBlock;
  resample?: ResampleBlock;
  transform?: Record<string, unknown>;
}
