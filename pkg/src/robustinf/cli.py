"""Batch front door: `analyze --config <path>` over CSV data, JSON out.

Exit codes: 0 clean, 2 config error, 3 data error, 4 numeric infeasibility.
Flags override config values; seeds are mandatory for any resampling run.
The only environment variable honored is ROBUSTINF_VERBOSITY (0/1/2) for
stderr log verbosity.
"""

from __future__ import annotations

import argparse
import csv as csv_mod
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__, mht as mht_mod
from .data import collapse_periods, dataset_from_columns, read_csv_columns
from .errors import (
    ConfigError,
    DataError,
    InfeasibleError,
    RobustInfError,
)
from .inference import max_se_heuristic, t_tests
from .regression import fit_ols, leverage_infeasible_rows
from .resample import (
    PIVOTAL_REPLICATION_GUIDANCE,
    SE_REPLICATION_GUIDANCE,
    ResamplePlan,
    bootstrap_pairs,
    bootstrap_residual,
    bootstrap_se,
    bootstrap_t,
    bootstrap_wild,
    family_null_replicates,
    percentile_ci,
    randomization_inference,
)
from .vcov import (
    CLUSTER_LZ,
    HC_VARIANTS,
    ClusterMap,
    effective_clusters,
    vcov_bm,
    vcov_cluster,
    vcov_conventional,
    vcov_hc,
    vcov_multiway,
)

log = logging.getLogger("robustinf")

VCOV_CHOICES = (
    "conventional", "hc0", "hc1", "hc2", "hc3", "hc2_bm", "cluster", "multiway", "max_se",
)
MHT_CHOICES = ("bonferroni", "holm", "wy", "rw", "bh", "bky")
BOOT_CHOICES = ("pairs", "residual", "wild", "wild_cluster", "ri")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INFEASIBLE = 4


@dataclass
class AnalysisConfig:
    """Declarative analysis description (JSON file plus flag overrides)."""

    input: str
    outcome: str
    covariates: list[str]
    intercept: bool = True
    treatment: str | None = None
    clusters: list[str] = field(default_factory=list)
    vcov: str = "hc1"
    alpha: float = 0.05
    collapse: dict | None = None
    mht: dict | None = None
    resample: dict | None = None
    assumptions: str | None = None
    output_path: str | None = None
    output_csv: str | None = None
    timestamp: bool = True

    @classmethod
    def from_dict(cls, raw: dict) -> "AnalysisConfig":
        known = {
            "input", "outcome", "covariates", "intercept", "treatment", "clusters",
            "vcov", "alpha", "collapse_periods", "mht", "resample", "assumptions",
            "output",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("input", "outcome", "covariates"):
            if key not in raw:
                raise ConfigError(f"config is missing required key {key!r}")
        if not isinstance(raw["covariates"], list) or not raw["covariates"]:
            raise ConfigError("covariates must be a non-empty list of column names")
        out = raw.get("output") or {}
        cfg = cls(
            input=raw["input"],
            outcome=raw["outcome"],
            covariates=list(raw["covariates"]),
            intercept=bool(raw.get("intercept", True)),
            treatment=raw.get("treatment"),
            clusters=list(raw.get("clusters") or []),
            vcov=str(raw.get("vcov", "hc1")).lower(),
            alpha=float(raw.get("alpha", 0.05)),
            collapse=raw.get("collapse_periods"),
            mht=raw.get("mht"),
            resample=raw.get("resample"),
            assumptions=raw.get("assumptions"),
            output_path=out.get("path"),
            output_csv=out.get("csv_path"),
            timestamp=bool(out.get("timestamp", True)),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.vcov not in VCOV_CHOICES:
            raise ConfigError(f"vcov must be one of {VCOV_CHOICES}, got {self.vcov!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must be in (0, 1)")
        if self.vcov == "cluster" and not self.clusters:
            raise ConfigError("vcov=cluster needs at least one cluster column")
        if self.vcov == "multiway" and len(self.clusters) != 2:
            raise ConfigError("vcov=multiway needs exactly two cluster columns")
        if len(self.clusters) > 2:
            raise ConfigError("at most two cluster dimensions are supported")
        if self.mht is not None:
            method = str(self.mht.get("method", "")).lower()
            if method not in MHT_CHOICES:
                raise ConfigError(f"mht.method must be one of {MHT_CHOICES}")
            family = self.mht.get("family") or []
            if not family:
                raise ConfigError("mht.family must be a non-empty list of outcome columns")
            if method in ("wy", "rw"):
                if self.mht.get("seed") is None:
                    raise ConfigError(f"mht.method={method} needs mht.seed (seeds are mandatory)")
        if self.resample is not None:
            if "scheme" not in self.resample:
                raise ConfigError("resample.scheme is required")
            if str(self.resample["scheme"]).lower() not in BOOT_CHOICES:
                raise ConfigError(f"resample.scheme must be one of {BOOT_CHOICES}")
            if self.resample.get("seed") is None:
                raise ConfigError("resample.seed is required (seeds are mandatory)")
            if self.resample.get("replications") is None:
                raise ConfigError("resample.replications is required")


def _assumption_statement(cfg: AnalysisConfig) -> dict:
    if cfg.assumptions:
        return {"text": cfg.assumptions, "source": "user"}
    scheme = (cfg.resample or {}).get("scheme")
    if scheme == "ri":
        text = (
            "Template: the estimand is the treatment effect under the realized "
            "assignment mechanism; uncertainty is design-based, arising from the "
            "random assignment of treatment rather than from sampling. Replace "
            "this template with the study's own estimand and uncertainty statement."
        )
    else:
        cluster_txt = (
            f" with dependence within {', '.join(cfg.clusters)} clusters"
            if cfg.clusters
            else ""
        )
        text = (
            "Template: the estimand is a population regression coefficient; "
            f"uncertainty is sampling-based{cluster_txt}, arising from observing "
            "a sample rather than the full population. Replace this template with "
            "the study's own estimand and uncertainty statement."
        )
    return {"text": text, "source": "template"}


def _build_vcov(cfg: AnalysisConfig, fit, cluster_maps: list[ClusterMap]):
    kind = cfg.vcov
    if kind == "conventional":
        return vcov_conventional(fit)
    if kind in HC_VARIANTS:
        return vcov_hc(fit, kind)
    if kind == "hc2_bm":
        return vcov_bm(fit)
    if kind == "cluster":
        return vcov_cluster(fit, cluster_maps[0])
    if kind == "multiway":
        return vcov_multiway(fit, cluster_maps[0], cluster_maps[1])
    if kind == "max_se":
        return max_se_heuristic(vcov_conventional(fit), vcov_hc(fit, "hc1"))
    raise ConfigError(f"unhandled vcov kind {kind!r}")


def _coefficient_rows(report) -> list[dict]:
    return [
        {
            "name": c.name,
            "estimate": c.estimate,
            "se": c.se,
            "statistic": c.statistic,
            "dof": c.dof,
            "p_value": c.p_value,
            "ci_low": c.ci_low,
            "ci_high": c.ci_high,
        }
        for c in report.coefficients
    ]


def _histogram(values: np.ndarray, bins: int = 50) -> dict:
    counts, edges = np.histogram(values, bins=bins)
    return {"bin_edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}


def _target_coefficient(cfg: AnalysisConfig, fit) -> str:
    target = (cfg.resample or {}).get("target") or (cfg.mht or {}).get("target")
    if target is None and cfg.treatment is not None:
        target = cfg.treatment
    if target is None:
        target = fit.column_names[-1]
    if target not in fit.column_names:
        raise ConfigError(f"target coefficient {target!r} is not in the design")
    return target


def _run_mht(cfg: AnalysisConfig, columns_raw, cluster_maps, alpha) -> dict:
    method = str(cfg.mht["method"]).lower()
    family_outcomes = list(cfg.mht["family"])
    datasets = []
    for out_col in family_outcomes:
        ds, _ = dataset_from_columns(
            columns_raw,
            outcome=out_col,
            covariates=cfg.covariates,
            cluster_columns=cfg.clusters,
            treatment=cfg.treatment,
            add_intercept=cfg.intercept,
            source=cfg.input,
        )
        datasets.append(ds)

    fits = [fit_ols(d) for d in datasets]
    target = cfg.mht.get("target") or cfg.treatment
    if target is None:
        raise ConfigError("mht needs a target coefficient (mht.target or treatment)")

    vcovs = [_build_vcov(cfg, f, cluster_maps) for f in fits]
    reports = [t_tests(f, v, alpha) for f, v in zip(fits, vcovs)]
    raw_p = [r.coefficient(target).p_value for r in reports]
    stats = [r.coefficient(target).statistic for r in reports]

    dependence = None
    if method in ("wy", "rw"):
        se_kind = cfg.mht.get("se_kind") or ("cluster" if cfg.clusters else "hc1")
        scheme = cfg.mht.get("scheme") or ("wild_cluster" if cfg.clusters else "wild")
        plan = ResamplePlan(
            scheme=scheme,
            replications=int(cfg.mht.get("replications", PIVOTAL_REPLICATION_GUIDANCE)),
            seed=int(cfg.mht["seed"]),
            cluster_map=cluster_maps[0] if cfg.clusters else None,
        )
        fam = family_null_replicates(
            datasets, target, plan, se_kind=se_kind, ids=family_outcomes,
            n_workers=int(cfg.mht.get("workers", 1)),
        )
        dependence = fam.statistics
        stats = [float(s) for s in fam.observed]

    family = mht_mod.PValueFamily.from_p_values(
        raw_p, alpha=alpha, ids=family_outcomes, statistics=stats,
        dependence_source=dependence,
    )
    result = mht_mod.METHODS[method](family)
    return {
        "method": result.method,
        "error_rate": result.error_rate_kind,
        "alpha": result.alpha,
        "target": target,
        "results": [
            {
                "id": r.id,
                "raw_p": r.raw_p,
                "adjusted_p": r.adjusted_p,
                "rejected": r.rejected,
            }
            for r in result.results
        ],
        "notes": list(result.notes),
    }


def _run_resample(cfg: AnalysisConfig, data, fit, vcov_est, cluster_maps, alpha) -> dict:
    rs = dict(cfg.resample)
    scheme = str(rs["scheme"]).lower()
    cluster_map = cluster_maps[0] if cfg.clusters else None
    plan = ResamplePlan(
        scheme=scheme if scheme != "ri" else "ri",
        replications=int(rs["replications"]),
        seed=int(rs["seed"]),
        cluster_map=cluster_map,
        wild_weights=rs.get("wild_weights", "rademacher"),
        null_coefficient=rs.get("null_coefficient"),
        null_value=float(rs.get("null_value", 0.0)),
        assignment=rs.get("assignment", "complete"),
        bernoulli_p=rs.get("bernoulli_p"),
        exhaustive_threshold=int(rs.get("exhaustive_threshold", 100_000)),
    )
    workers = int(rs.get("workers", 1))
    out: dict = {
        "scheme": scheme,
        "replications": plan.replications,
        "seed": plan.seed,
        "workers": workers,
    }

    if scheme == "ri":
        res = randomization_inference(data, plan, n_workers=workers)
        out["ri"] = {
            "p_value": res.p_value,
            "observed": res.observed,
            "exhaustive": res.exhaustive,
            "n_draws": res.n_draws,
            "n_degenerate_skipped": res.n_degenerate_skipped,
            "assignment": res.assignment,
            "treated_count": res.treated_count,
            "notes": list(res.notes),
            "null_distribution_histogram": _histogram(res.null_distribution),
        }
        return out

    se_kind = rs.get("se_kind")
    if se_kind is None and vcov_est.kind in ("conventional",) + HC_VARIANTS + (CLUSTER_LZ,):
        se_kind = "cluster" if vcov_est.kind == CLUSTER_LZ else vcov_est.kind
    runner = {"pairs": bootstrap_pairs, "residual": bootstrap_residual,
              "wild": bootstrap_wild, "wild_cluster": bootstrap_wild}[scheme]
    dist = runner(data, plan, se_kind=se_kind, n_workers=workers)

    per_coef = {}
    for name in fit.column_names:
        entry = {"bootstrap_se": bootstrap_se(dist, name)}
        if plan.replications * alpha / 2.0 >= 1.0:
            lo, hi = percentile_ci(dist, name, alpha)
            entry["percentile_ci"] = [lo, hi]
        per_coef[name] = entry
    out["coefficients"] = per_coef
    out["n_redraws"] = dist.n_redraws
    out["notes"] = list(dist.notes)

    target = _target_coefficient(cfg, fit)
    if dist.se is not None and plan.replications >= 1_000:
        bt = bootstrap_t(dist, fit, vcov_est, target, alpha)
        out["bootstrap_t"] = {
            "coefficient": bt.coefficient,
            "estimate": bt.estimate,
            "se": bt.se,
            "t_observed": bt.t_observed,
            "critical_value": bt.critical_value,
            "p_value": bt.p_value,
            "ci_low": bt.ci_low,
            "ci_high": bt.ci_high,
            "center": bt.center,
        }
        j = dist.coef_index(target)
        out["null_distribution_histogram"] = _histogram(dist.t_draws()[:, j])
    elif dist.se is None:
        out["notes"].append(
            f"bootstrap-t omitted: no per-replication SE recipe for vcov kind "
            f"{vcov_est.kind!r}"
        )
    return out


def run_analysis(cfg: AnalysisConfig) -> dict:
    """Execute fit -> vcov -> tests -> optional MHT -> optional resampling."""
    with warnings.catch_warnings(record=True) as wlist:
        warnings.simplefilter("always")
        report = _run_analysis_inner(cfg)
        captured = list(dict.fromkeys(str(w.message) for w in wlist))
    report["warnings"] = captured + report.get("warnings", [])
    return report


def _run_analysis_inner(cfg: AnalysisConfig) -> dict:
    columns_raw = read_csv_columns(cfg.input)
    transform_info = None
    if cfg.collapse:
        for key in ("unit", "period", "cutoff"):
            if key not in cfg.collapse:
                raise ConfigError(f"collapse_periods needs {key!r}")
        columns_raw, collapse_rep = collapse_periods(
            columns_raw,
            unit=cfg.collapse["unit"],
            period=cfg.collapse["period"],
            cutoff=float(cfg.collapse["cutoff"]),
        )
        transform_info = {
            "collapse_periods": {
                "unit": cfg.collapse["unit"],
                "period": cfg.collapse["period"],
                "cutoff": float(cfg.collapse["cutoff"]),
                "n_units": collapse_rep.n_units,
                "units_dropped_one_sided": collapse_rep.units_dropped_one_sided,
                "columns_dropped": list(collapse_rep.columns_dropped),
            }
        }

    data, ingest_rep = dataset_from_columns(
        columns_raw,
        outcome=cfg.outcome,
        covariates=cfg.covariates,
        cluster_columns=cfg.clusters,
        treatment=cfg.treatment,
        add_intercept=cfg.intercept,
        source=cfg.input,
    )

    cluster_maps = [
        ClusterMap(dimension_name=name, labels=data.cluster_labels[name],
                   n_clusters=int(data.cluster_labels[name].max()) + 1)
        for name in cfg.clusters
    ]

    fit = fit_ols(data)
    vcov_est = _build_vcov(cfg, fit, cluster_maps)
    tests = t_tests(fit, vcov_est, cfg.alpha)

    diagnostics = dict(tests.diagnostics)
    diagnostics["infeasible_rows"] = [int(i) for i in leverage_infeasible_rows(fit)]
    if cluster_maps:
        diagnostics["effective_clusters"] = {
            cm.dimension_name: {
                name: effective_clusters(fit, cm, j)
                for j, name in enumerate(fit.column_names)
            }
            for cm in cluster_maps
        }

    report: dict = {
        "tool": {"name": "robustinf", "version": __version__},
        "config": {
            "input": cfg.input,
            "outcome": cfg.outcome,
            "covariates": cfg.covariates,
            "intercept": cfg.intercept,
            "treatment": cfg.treatment,
            "clusters": cfg.clusters,
            "vcov": cfg.vcov,
            "alpha": cfg.alpha,
        },
        "data": {
            "n_rows_read": ingest_rep.n_rows_read,
            "n_rows_used": ingest_rep.n_rows_used,
            "n_dropped": ingest_rep.n_dropped,
            "dropped_by_column": ingest_rep.dropped_by_column,
            "cluster_label_maps": ingest_rep.label_maps,
        },
        "fit": {
            "n": fit.n,
            "k": fit.k,
            "sigma2_hat": fit.sigma2_hat,
            "columns": list(fit.column_names),
        },
        "vcov": {
            "kind": vcov_est.kind,
            "dof": [float(d) for d in vcov_est.dof],
            "cluster_counts": dict(vcov_est.cluster_counts or {}),
            "eigenvalue_fix": vcov_est.eigenvalue_fix,
            "notes": list(vcov_est.notes),
            "matrix": [[float(v) for v in row] for row in vcov_est.matrix],
        },
        "coefficients": _coefficient_rows(tests),
        "diagnostics": diagnostics,
        "assumption_statement": _assumption_statement(cfg),
        "warnings": [],
    }
    if transform_info:
        report["transform"] = transform_info
    if cfg.timestamp:
        report["timestamp"] = datetime.now(timezone.utc).isoformat()

    if cfg.mht is not None:
        report["mht"] = _run_mht(cfg, columns_raw, cluster_maps, cfg.alpha)
    if cfg.resample is not None:
        report["resample"] = _run_resample(cfg, data, fit, vcov_est, cluster_maps, cfg.alpha)
        r = int(cfg.resample["replications"])
        if cfg.resample.get("scheme") != "ri" and r < SE_REPLICATION_GUIDANCE:
            log.info("low replication count r=%d", r)
    return report


def write_report(report: dict, path: str | None, csv_path: str | None) -> str:
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=True)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.write("\n")
    if csv_path:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv_mod.writer(fh)
            cols = ["name", "estimate", "se", "statistic", "dof", "p_value",
                    "ci_low", "ci_high"]
            writer.writerow(cols)
            for row in report["coefficients"]:
                writer.writerow([row[c] for c in cols])
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="analyze",
        description="Robust-inference batch analysis over CSV data (JSON report out).",
    )
    parser.add_argument("--config", required=True, help="path to the JSON config file")
    parser.add_argument("--vcov", choices=VCOV_CHOICES, help="override config vcov kind")
    parser.add_argument("--mht", choices=MHT_CHOICES, help="override mht method")
    parser.add_argument("--boot", choices=BOOT_CHOICES, help="override resample scheme")
    parser.add_argument("--reps", type=int, help="override resample replications")
    parser.add_argument("--seed", type=int, help="override resample seed")
    parser.add_argument("--alpha", type=float, help="override test level")
    parser.add_argument("--out", help="override report output path")
    parser.add_argument("--out-csv", help="also write a flat coefficient-table CSV")
    parser.add_argument(
        "--no-timestamp", action="store_true",
        help="omit the timestamp so identical runs produce byte-identical reports",
    )
    return parser


def _apply_overrides(cfg: AnalysisConfig, args) -> AnalysisConfig:
    if args.vcov:
        cfg.vcov = args.vcov
    if args.alpha is not None:
        cfg.alpha = args.alpha
    if args.mht:
        if cfg.mht is None:
            raise ConfigError("--mht override needs an mht section in the config")
        cfg.mht = {**cfg.mht, "method": args.mht}
    if args.boot:
        if cfg.resample is None:
            raise ConfigError("--boot override needs a resample section in the config")
        cfg.resample = {**cfg.resample, "scheme": args.boot}
    if args.reps is not None:
        if cfg.resample is None:
            raise ConfigError("--reps override needs a resample section in the config")
        cfg.resample = {**cfg.resample, "replications": args.reps}
    if args.seed is not None:
        if cfg.resample is None:
            raise ConfigError("--seed override needs a resample section in the config")
        cfg.resample = {**cfg.resample, "seed": args.seed}
    if args.out:
        cfg.output_path = args.out
    if args.out_csv:
        cfg.output_csv = args.out_csv
    if args.no_timestamp:
        cfg.timestamp = False
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    verbosity = os.environ.get("ROBUSTINF_VERBOSITY", "0")
    level = {"0": logging.WARNING, "1": logging.INFO, "2": logging.DEBUG}.get(
        verbosity, logging.WARNING
    )
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(message)s")

    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        print(f"config error [config_error]: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"config error [config_error]: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        cfg = AnalysisConfig.from_dict(raw)
        cfg = _apply_overrides(cfg, args)
        report = run_analysis(cfg)
    except ConfigError as exc:
        print(f"config error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InfeasibleError as exc:
        print(f"infeasible [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except RobustInfError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_DATA

    text = write_report(report, cfg.output_path, cfg.output_csv)
    if not cfg.output_path:
        print(text)
    for msg in report.get("warnings", []):
        log.warning("%s", msg)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
