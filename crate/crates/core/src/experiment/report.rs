use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{Arch, ExperimentConfig};
use super::sweep::PointResult;
use crate::error::{Error, Result};
use crate::metrics::AggregatedMetrics;
use crate::workload::ModelKind;

/// One line of a results table: a single workload or an aggregate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub experiment: String,
    pub arch: Arch,
    pub model: ModelKind,
    pub value: String,
    pub variant: String,
    /// Workload id, `ALL`, or a `TP-t` / `EP-e` group.
    pub workload: String,
    pub gamma: f64,
    pub delta: f64,
    pub theta: f64,
    /// Per-workload only; empty for aggregates.
    pub theta_spatial: Option<f64>,
    pub theta_temporal: Option<f64>,
    pub mu: f64,
    pub eta: f64,
    pub effective_bytes: f64,
    pub received_bytes: f64,
    pub forwarded_bytes: f64,
    pub duration_s: f64,
    /// Aggregates: workload count. Workloads: weight in the `ALL` aggregate.
    pub count_or_weight: f64,
}

pub const COLUMNS: [&str; 18] = [
    "experiment",
    "arch",
    "model",
    "value",
    "variant",
    "workload",
    "gamma",
    "delta",
    "theta",
    "theta_spatial",
    "theta_temporal",
    "mu",
    "eta",
    "effective_bytes",
    "received_bytes",
    "forwarded_bytes",
    "duration_s",
    "count_or_weight",
];

fn aggregate_row(p: &PointResult, label: &str, a: &AggregatedMetrics) -> ReportRow {
    ReportRow {
        experiment: p.experiment.clone(),
        arch: p.arch,
        model: p.model,
        value: p.value.clone(),
        variant: p.variant.clone(),
        workload: label.to_string(),
        gamma: a.gamma_bar,
        delta: a.delta_bar,
        theta: a.theta_bar,
        theta_spatial: None,
        theta_temporal: None,
        mu: a.mu_bar,
        eta: a.eta_bar,
        effective_bytes: a.records.iter().map(|r| r.effective_bytes).sum(),
        received_bytes: a.records.iter().map(|r| r.received_bytes).sum(),
        forwarded_bytes: a.records.iter().map(|r| r.forwarded_bytes).sum(),
        duration_s: a.weights.iter().map(|w| w.duration).sum(),
        count_or_weight: a.records.len() as f64,
    }
}

pub fn aggregate_rows(points: &[PointResult]) -> Vec<ReportRow> {
    points
        .iter()
        .flat_map(|p| p.aggregates.iter().map(move |(l, a)| aggregate_row(p, l, a)))
        .collect()
}

pub fn workload_rows(points: &[PointResult]) -> Vec<ReportRow> {
    let mut out = Vec::new();
    for p in points {
        let weights = p.all().map(|a| &a.weights);
        for w in &p.workloads {
            let r = &w.record;
            let lambda = weights
                .and_then(|ws| ws.iter().find(|x| x.workload == w.id))
                .map_or(0.0, |x| x.lambda);
            out.push(ReportRow {
                experiment: p.experiment.clone(),
                arch: p.arch,
                model: p.model,
                value: p.value.clone(),
                variant: p.variant.clone(),
                workload: w.id.clone(),
                gamma: r.gamma,
                delta: r.delta,
                theta: r.theta,
                theta_spatial: Some(r.theta_spatial),
                theta_temporal: Some(r.theta_temporal),
                mu: r.mu,
                eta: r.eta,
                effective_bytes: r.effective_bytes,
                received_bytes: r.received_bytes,
                forwarded_bytes: r.forwarded_bytes,
                duration_s: r.duration,
                count_or_weight: lambda,
            });
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Tab-separated table with a header line.
pub fn format_table(rows: &[ReportRow]) -> String {
    let mut out = COLUMNS.join("\t");
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.experiment,
            r.arch.name(),
            r.model.name(),
            r.value,
            r.variant,
            r.workload,
            r.gamma,
            r.delta,
            r.theta,
            opt(r.theta_spatial),
            opt(r.theta_temporal),
            r.mu,
            r.eta,
            r.effective_bytes,
            r.received_bytes,
            r.forwarded_bytes,
            r.duration_s,
            r.count_or_weight
        );
    }
    out
}

/// Per-point failures, one line each.
pub fn format_failures(points: &[PointResult]) -> String {
    let mut out = String::from("experiment\tarch\tmodel\tvalue\tvariant\tworkload\terror\n");
    for p in points {
        let head = format!("{}\t{}\t{}\t{}\t{}", p.experiment, p.arch.name(), p.model.name(), p.value, p.variant);
        if let Some(e) = &p.error {
            let _ = writeln!(out, "{head}\t*\t{e}");
        }
        for f in &p.failures {
            let _ = writeln!(out, "{head}\t{}\t{}", f.id, f.error);
        }
    }
    out
}

type Column = (&'static str, fn(&ReportRow) -> f64);

const GAMMA: Column = ("gamma", |r| r.gamma);
const DELTA: Column = ("delta", |r| r.delta);
const THETA: Column = ("theta", |r| r.theta);
const MU: Column = ("mu", |r| r.mu);
const ETA: Column = ("eta", |r| r.eta);

fn series(rows: &[&ReportRow], cols: &[Column]) -> String {
    let mut out = String::from("arch\tvariant\tvalue\tgroup");
    for (name, _) in cols {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{}\t{}\t{}\t{}", r.arch.name(), r.variant, r.value, r.workload);
        for (_, f) in cols {
            let _ = write!(out, "\t{}", f(r));
        }
        out.push('\n');
    }
    out
}

/// Plot-ready series keyed by figure name. Only figures whose experiment
/// and model appear in `points` are produced.
pub fn figure_series(points: &[PointResult]) -> Vec<(String, String)> {
    let wl = workload_rows(points);
    let agg = aggregate_rows(points);
    fn pick<'a>(rows: &'a [ReportRow], exp: &str, model: ModelKind, all_only: bool) -> Vec<&'a ReportRow> {
        rows.iter()
            .filter(|r| r.experiment == exp && r.model == model && (!all_only || r.workload == "ALL"))
            .collect()
    }
    let mut out = Vec::new();
    let mut push = |name: &str, rows: Vec<&ReportRow>, cols: &[Column]| {
        if !rows.is_empty() {
            out.push((name.to_string(), series(&rows, cols)));
        }
    };
    let five = [GAMMA, DELTA, THETA, MU, ETA];
    push("dissect-dense", pick(&wl, "dissect", ModelKind::Dense, false), &five);
    push("dissect-moe", pick(&wl, "dissect", ModelKind::Moe, false), &five);
    push("tiered-ratio-dense-theta", pick(&agg, "tiered-ratio", ModelKind::Dense, false), &[THETA]);
    push("tiered-ratio-moe-theta", pick(&agg, "tiered-ratio", ModelKind::Moe, false), &[THETA]);
    push("server-size-delta", pick(&agg, "server-size", ModelKind::Moe, false), &[DELTA]);
    push("server-size-theta", pick(&agg, "server-size", ModelKind::Moe, false), &[THETA]);
    push("server-size-mu", pick(&agg, "server-size", ModelKind::Moe, false), &[MU]);
    push("inc", pick(&agg, "inc", ModelKind::Dense, false), &[GAMMA, ETA]);
    push("cluster-scale-dense", pick(&agg, "cluster-scale", ModelKind::Dense, true), &[ETA]);
    push("cluster-scale-moe", pick(&agg, "cluster-scale", ModelKind::Moe, true), &[ETA]);
    out
}

/// Results file: every point with its workloads, aggregates and failures.
pub fn results_json(points: &[PointResult]) -> String {
    #[derive(Serialize)]
    struct Point<'a> {
        experiment: &'a str,
        arch: Arch,
        model: ModelKind,
        value: &'a str,
        variant: &'a str,
        error: &'a Option<String>,
        failures: &'a [super::run::Failure],
        aggregates: Vec<Agg<'a>>,
        workloads: &'a [super::run::WorkloadResult],
    }
    #[derive(Serialize)]
    struct Agg<'a> {
        group: &'a str,
        gamma_bar: f64,
        delta_bar: f64,
        theta_bar: f64,
        mu_bar: f64,
        eta_bar: f64,
        eta_bar_pooled: f64,
        weights: &'a [crate::metrics::WorkloadWeight],
    }
    let pts: Vec<Point> = points
        .iter()
        .map(|p| Point {
            experiment: &p.experiment,
            arch: p.arch,
            model: p.model,
            value: &p.value,
            variant: &p.variant,
            error: &p.error,
            failures: &p.failures,
            aggregates: p
                .aggregates
                .iter()
                .map(|(l, a)| Agg {
                    group: l,
                    gamma_bar: a.gamma_bar,
                    delta_bar: a.delta_bar,
                    theta_bar: a.theta_bar,
                    mu_bar: a.mu_bar,
                    eta_bar: a.eta_bar,
                    eta_bar_pooled: a.eta_bar_pooled,
                    weights: &a.weights,
                })
                .collect(),
            workloads: &p.workloads,
        })
        .collect();
    serde_json::to_string_pretty(&pts).expect("results serialize")
}

/// Hex digest of the effective configuration.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_toml().as_bytes()))
}

pub fn manifest(cfg: &ExperimentConfig, command: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# run manifest");
    let _ = writeln!(out, "tool = \"{} {}\"", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "command = \"{command}\"");
    let _ = writeln!(out, "config_sha256 = \"{}\"", config_hash(cfg));
    let _ = writeln!(out, "\n[config]");
    // re-root the config tables under [config]
    for line in cfg.to_toml().lines() {
        if let Some(rest) = line.strip_prefix('[') {
            let _ = writeln!(out, "[config.{rest}");
        } else {
            let _ = writeln!(out, "{line}");
        }
    }
    out
}

/// Writes every report into `dir`, creating it if needed. Contents depend
/// only on `cfg`, `command` and `points`.
pub fn write_reports(dir: &Path, cfg: &ExperimentConfig, command: &str, points: &[PointResult]) -> Result<Vec<PathBuf>> {
    let fail = |p: &Path, e: std::io::Error| Error::Io(format!("cannot write {}: {e}", p.display()));
    fs::create_dir_all(dir.join("series")).map_err(|e| fail(dir, e))?;
    let mut files = vec![
        ("workloads.tsv".to_string(), format_table(&workload_rows(points))),
        ("aggregates.tsv".to_string(), format_table(&aggregate_rows(points))),
        ("failures.tsv".to_string(), format_failures(points)),
        ("results.json".to_string(), results_json(points)),
        ("manifest.toml".to_string(), manifest(cfg, command)),
    ];
    for (name, body) in figure_series(points) {
        files.push((format!("series/{name}.tsv"), body));
    }
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| fail(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Fresh run directory `<out_dir>/<config hash prefix>-<unix seconds>`,
/// with a numeric suffix if that name is taken.
pub fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    let ts = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let base = format!("{}-{ts}", &config_hash(cfg)[..12]);
    let mut dir = cfg.out_dir.join(&base);
    let mut i = 1;
    while dir.exists() {
        dir = cfg.out_dir.join(format!("{base}-{i}"));
        i += 1;
    }
    dir
}

/// Runs report writing into a fresh run directory.
pub fn emit_reports(cfg: &ExperimentConfig, command: &str, points: &[PointResult]) -> Result<PathBuf> {
    let dir = run_dir(cfg);
    write_reports(&dir, cfg, command, points)?;
    Ok(dir)
}
