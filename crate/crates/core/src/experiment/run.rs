use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Arch, TorusConfig};
use crate::error::Result;
use crate::flow::{evaluate_workload, PhaseSummary};
use crate::metrics::{aggregate_metrics, AggregatedMetrics, MetricsRecord, Weighting};
use crate::topology::{build_rail, RailParams, RouteMode, Topology};
use crate::traffic::{apply_inc_transform, build_iteration_schedule};
use crate::workload::{
    enumerate_configs, place_groups, scale_workload, torus_for_config, Coefficients, Constraints, ModelKind,
    ParallelismConfig,
};

/// Everything needed to evaluate one workload suite on one fabric.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub arch: Arch,
    pub cluster_size: usize,
    pub torus: TorusConfig,
    pub rail: RailParams,
    pub inc: bool,
    pub a2a_routing: RouteMode,
    pub coefficients: Coefficients,
    pub constraints: Constraints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadResult {
    pub arch: Arch,
    pub config: ParallelismConfig,
    pub id: String,
    /// `TP-t` for dense, `EP-e` for MoE.
    pub group: String,
    pub record: MetricsRecord,
    pub phases: Vec<PhaseSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub arch: Arch,
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteResult {
    pub results: Vec<WorkloadResult>,
    pub failures: Vec<Failure>,
}

pub fn group_label(config: &ParallelismConfig) -> String {
    match config.model {
        ModelKind::Dense => format!("TP-{}", config.t),
        ModelKind::Moe => format!("EP-{}", config.e),
    }
}

fn evaluate_on(scenario: &Scenario, topo: &Topology, config: &ParallelismConfig) -> Result<WorkloadResult> {
    let spec = scale_workload(config, &scenario.coefficients)?;
    let layout = place_groups(config, topo)?;
    let mut phases = build_iteration_schedule(&spec, &layout, scenario.a2a_routing)?;
    if scenario.inc {
        phases = phases.iter().map(|p| apply_inc_transform(p, topo)).collect();
    }
    let ev = evaluate_workload(topo, &phases)?;
    Ok(WorkloadResult {
        arch: scenario.arch,
        config: *config,
        id: config.id(),
        group: group_label(config),
        record: ev.record,
        phases: ev.phases,
    })
}

/// Evaluates one workload. The torus is reshaped to the workload's
/// parallel degrees; rail fabrics are built from the scenario.
pub fn evaluate_one(scenario: &Scenario, config: &ParallelismConfig) -> Result<WorkloadResult> {
    let topo = match scenario.arch {
        Arch::Torus => torus_for_config(config, &scenario.torus.params(scenario.cluster_size))?,
        Arch::Rail => build_rail(scenario.cluster_size, &scenario.rail)?,
    };
    evaluate_on(scenario, &topo, config)
}

/// Evaluates every enumerated configuration of `model`. Per-workload errors
/// are collected; results keep enumeration order.
pub fn evaluate_suite(scenario: &Scenario, model: ModelKind) -> Result<SuiteResult> {
    let configs = enumerate_configs(scenario.cluster_size, model, &scenario.constraints);
    let shared = match scenario.arch {
        Arch::Rail => Some(build_rail(scenario.cluster_size, &scenario.rail)?),
        Arch::Torus => None,
    };
    let outcomes: Vec<(String, Result<WorkloadResult>)> = configs
        .par_iter()
        .map(|c| {
            let r = match &shared {
                Some(t) => evaluate_on(scenario, t, c),
                None => evaluate_one(scenario, c),
            };
            (c.id(), r)
        })
        .collect();
    let mut out = SuiteResult::default();
    for (id, r) in outcomes {
        match r {
            Ok(w) => out.results.push(w),
            Err(e) => out.failures.push(Failure {
                arch: scenario.arch,
                id,
                error: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Aggregate over `results`, or `None` for an empty set.
pub fn aggregate(results: &[&WorkloadResult], weighting: Weighting) -> Result<Option<AggregatedMetrics>> {
    if results.is_empty() {
        return Ok(None);
    }
    let records: Vec<(String, MetricsRecord)> = results.iter().map(|r| (r.id.clone(), r.record.clone())).collect();
    aggregate_metrics(&records, weighting).map(Some)
}

/// `ALL` first, then one aggregate per TP or EP degree in ascending order.
pub fn grouped_aggregates(results: &[WorkloadResult], weighting: Weighting) -> Result<Vec<(String, AggregatedMetrics)>> {
    let mut out = Vec::new();
    let all: Vec<&WorkloadResult> = results.iter().collect();
    if let Some(a) = aggregate(&all, weighting)? {
        out.push(("ALL".to_string(), a));
    }
    let mut degrees: Vec<usize> = results.iter().map(|r| r.config.inner_degree()).collect();
    degrees.sort_unstable();
    degrees.dedup();
    for deg in degrees {
        let members: Vec<&WorkloadResult> = results.iter().filter(|r| r.config.inner_degree() == deg).collect();
        let label = members[0].group.clone();
        if let Some(a) = aggregate(&members, weighting)? {
            out.push((label, a));
        }
    }
    Ok(out)
}
