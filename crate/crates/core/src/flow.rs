//! Fluid evaluation of phase traffic on a topology.
//!
//! Phases run back to back. Inside a phase every flow starts together and the
//! phase lasts until its most loaded egress port drains.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{compose_metrics, MetricsRecord, PortLedger};
use crate::topology::{GpuId, PortId, RouteMode, Topology, WeightedPath};
use crate::traffic::{FlowClass, FlowSet, Phase, PhaseTag, Traffic};

/// Explicit paths of every flow class. Meant for inspection and small
/// cases; evaluation charges ports without materializing paths.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteTable {
    pub routes: Vec<(FlowClass, Vec<WeightedPath>)>,
}

impl RouteTable {
    /// Per-port bytes implied by the table.
    pub fn port_bytes(&self, port_count: usize) -> Vec<f64> {
        let mut out = vec![0.0; port_count];
        for (c, paths) in &self.routes {
            for p in paths {
                for &port in &p.ports {
                    out[port] += c.bytes() * p.weight;
                }
            }
        }
        out
    }
}

pub fn route_flows(topology: &Topology, flows: &FlowSet, mode: RouteMode) -> Result<RouteTable> {
    let routes = flows
        .classes
        .iter()
        .map(|c| Ok((*c, topology.paths(c.src, c.dst, mode)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RouteTable { routes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseLoad {
    pub tag: PhaseTag,
    pub port_bytes: Vec<f64>,
    pub gpu_received: Vec<f64>,
    pub duration: f64,
    /// Port that sets the duration.
    pub bottleneck: Option<PortId>,
}

/// Charges one phase onto the topology.
pub fn load_phase(topology: &Topology, phase: &Phase) -> Result<PhaseLoad> {
    let mut acc = topology.accumulator();
    for unit in &phase.units {
        match &unit.traffic {
            Traffic::Flows(f) => {
                for c in &f.classes {
                    acc.add_flow(c.src, c.dst, c.bytes(), phase.mode)?;
                }
            }
            Traffic::UniformAllToAll { group, pair_bytes } => {
                acc.add_uniform_all_to_all(group, *pair_bytes, phase.mode)?;
            }
            Traffic::SwitchReduction { group, bytes_per_member } => {
                acc.add_switch_reduction(group, *bytes_per_member)?;
            }
        }
    }
    let (port_bytes, gpu_received) = acc.finish();
    let rates = topology.port_rates();
    let (duration, bottleneck) = phase_duration(&port_bytes, &rates)?;
    Ok(PhaseLoad {
        tag: phase.tag,
        port_bytes,
        gpu_received,
        duration,
        bottleneck,
    })
}

/// Drain time of the most loaded port.
pub fn phase_duration(port_bytes: &[f64], port_rates: &[f64]) -> Result<(f64, Option<PortId>)> {
    let mut best = (0.0, None);
    for (p, (&b, &r)) in port_bytes.iter().zip(port_rates).enumerate() {
        if b <= 0.0 {
            continue;
        }
        if !(r > 0.0) {
            return Err(Error::Domain(format!("port {p} carries traffic but has no rate")));
        }
        let t = b / r;
        if t > best.0 {
            best = (t, Some(p));
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub tag: PhaseTag,
    pub duration: f64,
    pub effective_bytes: f64,
    pub received_bytes: f64,
    pub forwarded_bytes: f64,
    pub bottleneck: Option<PortId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub ledger: PortLedger,
    pub record: MetricsRecord,
    pub phases: Vec<PhaseSummary>,
}

/// Evaluates one iteration: per-port bytes summed over phases, duration the
/// sum of phase durations.
pub fn evaluate_workload(topology: &Topology, phases: &[Phase]) -> Result<Evaluation> {
    let mut port_bytes = vec![0.0; topology.port_count()];
    let mut gpu_received = vec![0.0; topology.gpu_count()];
    let mut summaries = Vec::with_capacity(phases.len());
    let mut effective = 0.0;
    let mut received = 0.0;
    let mut duration = 0.0;
    for phase in phases {
        let load = load_phase(topology, phase)?;
        let eff = phase.effective_bytes()?;
        let recv = phase.received_bytes();
        let rs: f64 = load.gpu_received.iter().sum();
        if (rs - recv).abs() > 1e-9 * recv.max(1.0) {
            return Err(Error::InconsistentLedger(format!(
                "{} phase delivered {rs} bytes, traffic declares {recv}",
                phase.tag.name()
            )));
        }
        for (a, b) in port_bytes.iter_mut().zip(&load.port_bytes) {
            *a += b;
        }
        for (a, b) in gpu_received.iter_mut().zip(&load.gpu_received) {
            *a += b;
        }
        summaries.push(PhaseSummary {
            tag: phase.tag,
            duration: load.duration,
            effective_bytes: eff,
            received_bytes: recv,
            forwarded_bytes: load.port_bytes.iter().sum(),
            bottleneck: load.bottleneck,
        });
        effective += eff;
        received += recv;
        duration += load.duration;
    }
    let ledger = PortLedger {
        port_bytes,
        port_rates: topology.port_rates(),
        gpu_received,
        duration,
    };
    let record = compose_metrics(effective, received, &ledger)?;
    Ok(Evaluation {
        ledger,
        record,
        phases: summaries,
    })
}

/// Columnar ledger dump: a header block, then one line per port with
/// nonzero load.
pub fn export_ledger(topology: &Topology, ledger: &PortLedger) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# duration_s {}", ledger.duration);
    let _ = writeln!(out, "# ports {}", ledger.port_bytes.len());
    let _ = writeln!(out, "# forwarded_bytes {}", ledger.forwarded());
    let _ = writeln!(out, "# received_bytes {}", ledger.received());
    let mut tier_of = vec![""; topology.port_count()];
    let inv = topology.inventory();
    for tier in inv.tiers() {
        for &p in inv.ports(tier) {
            tier_of[p] = tier.name();
        }
    }
    let _ = writeln!(out, "port\ttier\trate_Bps\tbytes\tutilization");
    for p in ledger.active_ports() {
        let rate = ledger.port_rates[p];
        let util = if ledger.duration > 0.0 {
            ledger.port_bytes[p] / (rate * ledger.duration)
        } else {
            0.0
        };
        let _ = writeln!(out, "{p}\t{}\t{rate}\t{}\t{util:.6}", tier_of[p], ledger.port_bytes[p]);
    }
    out
}

/// Per-GPU received bytes, one line per GPU.
pub fn export_received(ledger: &PortLedger) -> String {
    let mut out = String::from("gpu\treceived_bytes\n");
    for (g, b) in ledger.gpu_received.iter().enumerate() {
        let _ = writeln!(out, "{}\t{b}", g as GpuId);
    }
    out
}
