use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Arch, ExperimentConfig, SweepAxis};
use super::run::{evaluate_suite, grouped_aggregates, Failure, Scenario, WorkloadResult};
use crate::error::{Error, Result};
use crate::metrics::AggregatedMetrics;
use crate::workload::ModelKind;

/// One evaluated point of an experiment: a fabric variant and a model suite.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub experiment: String,
    pub arch: Arch,
    pub model: ModelKind,
    /// Sweep value as printed, `baseline` for a dissection.
    pub value: String,
    /// Secondary key, the plane count for cluster-scale sweeps.
    pub variant: String,
    pub workloads: Vec<WorkloadResult>,
    /// `ALL` first, then per TP or EP degree.
    pub aggregates: Vec<(String, AggregatedMetrics)>,
    pub failures: Vec<Failure>,
    /// Set when the point could not be evaluated at all.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointKey {
    pub experiment: String,
    pub arch: Arch,
    pub model: ModelKind,
    pub value: String,
    pub variant: String,
}

/// Scenario list for an axis, in report order.
pub fn sweep_points(cfg: &ExperimentConfig, axis: SweepAxis) -> Vec<(PointKey, Scenario)> {
    let mut out = Vec::new();
    let experiment = match axis {
        SweepAxis::None => "dissect",
        other => other.name(),
    }
    .to_string();
    for arch in cfg.arch.archs() {
        for model in cfg.model.models() {
            let key = |value: String, variant: String| PointKey {
                experiment: experiment.clone(),
                arch,
                model,
                value,
                variant,
            };
            let base = cfg.scenario(arch);
            match axis {
                SweepAxis::None => out.push((key("baseline".into(), String::new()), base)),
                SweepAxis::TieredRatio => {
                    for &r in &cfg.sweep.tiered_ratios {
                        let mut s = base.clone();
                        match arch {
                            Arch::Torus => s.torus.tiered_ratio = r,
                            Arch::Rail => s.rail.tiered_ratio = r as f64,
                        }
                        out.push((key(r.to_string(), String::new()), s));
                    }
                }
                SweepAxis::ServerSize => {
                    // a torus has no servers
                    if arch == Arch::Rail {
                        for &g in &cfg.sweep.server_sizes {
                            let mut s = base.clone();
                            if cfg.sweep.keep_rails {
                                s.rail.rail_count = Some(cfg.rail.rail_count.unwrap_or(cfg.rail.gpus_per_server));
                            }
                            s.rail.gpus_per_server = g;
                            out.push((key(g.to_string(), String::new()), s));
                        }
                    }
                }
                SweepAxis::Inc => {
                    // in-switch reduction needs an intra-server switch
                    if arch == Arch::Rail {
                        for on in [false, true] {
                            let mut s = base.clone();
                            s.inc = on;
                            out.push((key(if on { "on" } else { "off" }.into(), String::new()), s));
                        }
                    }
                }
                SweepAxis::ClusterScale => {
                    for &n in &cfg.sweep.cluster_scales {
                        let mut s = base.clone();
                        s.cluster_size = n;
                        match arch {
                            Arch::Torus => out.push((key(n.to_string(), String::new()), s)),
                            Arch::Rail => {
                                for &p in &cfg.sweep.plane_counts {
                                    let mut s = s.clone();
                                    s.rail.plane_count = p;
                                    out.push((key(n.to_string(), format!("planes-{p}")), s));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn run_point(cfg: &ExperimentConfig, key: PointKey, scenario: &Scenario) -> PointResult {
    let mut point = PointResult {
        experiment: key.experiment,
        arch: key.arch,
        model: key.model,
        value: key.value,
        variant: key.variant,
        workloads: Vec::new(),
        aggregates: Vec::new(),
        failures: Vec::new(),
        error: None,
    };
    let suite = evaluate_suite(scenario, key.model).and_then(|s| {
        let aggs = grouped_aggregates(&s.results, cfg.weighting)?;
        Ok((s, aggs))
    });
    match suite {
        Ok((s, aggs)) => {
            point.workloads = s.results;
            point.failures = s.failures;
            point.aggregates = aggs;
        }
        Err(e) => point.error = Some(e.to_string()),
    }
    point
}

/// Runs every point of `axis`; failed points are flagged, not fatal.
pub fn run_points(cfg: &ExperimentConfig, axis: SweepAxis) -> Vec<PointResult> {
    let points = sweep_points(cfg, axis);
    points
        .into_par_iter()
        .map(|(key, s)| run_point(cfg, key, &s))
        .collect()
}

/// Baseline evaluation of every selected architecture and model suite.
pub fn run_dissection(cfg: &ExperimentConfig) -> Vec<PointResult> {
    run_points(cfg, SweepAxis::None)
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<PointResult>> {
    if cfg.sweep.axis == SweepAxis::None {
        return Err(Error::Config("no sweep axis set".into()));
    }
    Ok(run_points(cfg, cfg.sweep.axis))
}

impl PointResult {
    pub fn all(&self) -> Option<&AggregatedMetrics> {
        self.aggregates.iter().find(|(l, _)| l == "ALL").map(|(_, a)| a)
    }

    pub fn group(&self, label: &str) -> Option<&AggregatedMetrics> {
        self.aggregates.iter().find(|(l, _)| l == label).map(|(_, a)| a)
    }

    pub fn workload(&self, id: &str) -> Option<&WorkloadResult> {
        self.workloads.iter().find(|w| w.id == id)
    }

    pub fn is_partial(&self) -> bool {
        self.error.is_some() || !self.failures.is_empty()
    }
}
