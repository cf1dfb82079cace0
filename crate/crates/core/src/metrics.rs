//! Switching-efficiency metrics computed from byte ledgers.
//!
//! Everything here is a pure function. The flow engine produces a
//! [`PortLedger`] plus the effective/received byte totals for one workload and
//! [`compose_metrics`] turns them into a [`MetricsRecord`]:
//!
//! ```text
//! eta = effective / (T * sum R_p)
//!     = (effective / received) * (received / forwarded) * (forwarded / (T * sum R_p))
//!     =        gamma           *         delta          *          theta
//! ```
//!
//! `theta` further splits into the fraction of port capacity that was ever
//! active (`theta_spatial`) and how busy that active capacity was
//! (`theta_temporal`). Suites of workloads are folded together with
//! [`aggregate_metrics`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack allowed when checking port feasibility, to absorb the
/// rounding of `bytes / rate * rate`.
const FEASIBILITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PrimitiveKind {
    PointToPoint,
    AllGather,
    ReduceScatter,
    AllReduce,
    AllToAllDispatch,
    AllToAllCombine,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 6] = [
        PrimitiveKind::PointToPoint,
        PrimitiveKind::AllGather,
        PrimitiveKind::ReduceScatter,
        PrimitiveKind::AllReduce,
        PrimitiveKind::AllToAllDispatch,
        PrimitiveKind::AllToAllCombine,
    ];

    /// Reduction primitives only count their reduced output as effective.
    pub fn is_reduction(self) -> bool {
        matches!(
            self,
            PrimitiveKind::ReduceScatter | PrimitiveKind::AllReduce | PrimitiveKind::AllToAllCombine
        )
    }
}

/// Effective data volume produced by one primitive.
///
/// `participants` is the group size; `tensor_size` is the full tensor each
/// GPU acts on. For point-to-point the group is the sending side of one
/// transfer, so a single pair yields `tensor_size`. Groups of one member move
/// nothing over the network and yield zero for the collective kinds.
pub fn effective_volume(
    kind: PrimitiveKind,
    participants: usize,
    tensor_size: f64,
    routed_experts: usize,
) -> Result<f64> {
    if participants < 1 {
        return Err(Error::Domain("a primitive needs at least one participant".into()));
    }
    if !(tensor_size > 0.0) || !tensor_size.is_finite() {
        return Err(Error::Domain(format!("tensor size must be positive, got {tensor_size}")));
    }
    if kind == PrimitiveKind::AllToAllDispatch && routed_experts < 1 {
        return Err(Error::Domain("all-to-all dispatch needs at least one routed expert".into()));
    }
    let n = participants as f64;
    let d = tensor_size;
    let shard = d / n;
    let v = match kind {
        PrimitiveKind::PointToPoint => n * d,
        _ if participants == 1 => 0.0,
        PrimitiveKind::AllGather => n * shard * (n - 1.0),
        PrimitiveKind::ReduceScatter => n * shard,
        PrimitiveKind::AllReduce => n * d,
        PrimitiveKind::AllToAllDispatch => n * shard * (n - 1.0) * routed_experts as f64,
        PrimitiveKind::AllToAllCombine => n * shard * (n - 1.0),
    };
    Ok(v)
}

/// Effective bytes per received byte.
pub fn data_efficiency(effective_bytes: f64, received_bytes: f64) -> Result<f64> {
    if effective_bytes < 0.0 || received_bytes < 0.0 {
        return Err(Error::InconsistentLedger("negative byte count".into()));
    }
    if received_bytes == 0.0 {
        if effective_bytes == 0.0 {
            return Ok(1.0);
        }
        return Err(Error::InconsistentLedger(format!(
            "{effective_bytes} effective bytes but nothing received"
        )));
    }
    Ok(effective_bytes / received_bytes)
}

/// Redundant bytes received per effective byte, derived from `gamma`.
pub fn redundancy_ratio(gamma: f64) -> f64 {
    1.0 / gamma - 1.0
}

/// Received bytes per forwarded byte, i.e. the inverse of the volume-weighted
/// forwarding count.
pub fn routing_efficiency(received_bytes: f64, forwarded_bytes: f64) -> Result<f64> {
    if received_bytes < 0.0 || forwarded_bytes < 0.0 {
        return Err(Error::InconsistentLedger("negative byte count".into()));
    }
    if forwarded_bytes < received_bytes * (1.0 - 1e-12) {
        return Err(Error::FlowConservation {
            received: received_bytes,
            forwarded: forwarded_bytes,
        });
    }
    if forwarded_bytes == 0.0 {
        return Ok(1.0);
    }
    Ok((received_bytes / forwarded_bytes).min(1.0))
}

/// Byte totals for one workload iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortLedger {
    /// Bytes forwarded by each egress port, indexed by port id.
    pub port_bytes: Vec<f64>,
    /// Line rate of each egress port in bytes per second.
    pub port_rates: Vec<f64>,
    /// Bytes delivered to each GPU as a final destination.
    pub gpu_received: Vec<f64>,
    /// Iteration duration in seconds.
    pub duration: f64,
}

impl PortLedger {
    pub fn forwarded(&self) -> f64 {
        self.port_bytes.iter().sum()
    }

    pub fn received(&self) -> f64 {
        self.gpu_received.iter().sum()
    }

    pub fn capacity_rate(&self) -> f64 {
        self.port_rates.iter().sum()
    }

    pub fn active_ports(&self) -> impl Iterator<Item = usize> + '_ {
        self.port_bytes
            .iter()
            .enumerate()
            .filter(|(_, b)| **b > 0.0)
            .map(|(p, _)| p)
    }

    pub fn check_feasible(&self) -> Result<()> {
        if self.port_bytes.len() != self.port_rates.len() {
            return Err(Error::InconsistentLedger(format!(
                "{} port byte entries for {} port rates",
                self.port_bytes.len(),
                self.port_rates.len()
            )));
        }
        for (port, (&bytes, &rate)) in self.port_bytes.iter().zip(&self.port_rates).enumerate() {
            if bytes < 0.0 || rate < 0.0 {
                return Err(Error::InconsistentLedger(format!("port {port} has negative bytes or rate")));
            }
            let limit = rate * self.duration;
            if bytes > limit * (1.0 + FEASIBILITY_SLACK) {
                return Err(Error::Infeasible {
                    port,
                    bytes,
                    limit,
                    duration: self.duration,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortUtilization {
    pub theta: f64,
    pub spatial: f64,
    pub temporal: f64,
}

pub fn port_utilization(ledger: &PortLedger) -> Result<PortUtilization> {
    ledger.check_feasible()?;
    let total_rate = ledger.capacity_rate();
    if !(total_rate > 0.0) {
        return Err(Error::Domain("topology has no switching capacity".into()));
    }
    let forwarded = ledger.forwarded();
    if forwarded == 0.0 {
        return Ok(PortUtilization {
            theta: 0.0,
            spatial: 0.0,
            temporal: 0.0,
        });
    }
    if !(ledger.duration > 0.0) {
        return Err(Error::InconsistentLedger("traffic forwarded in zero time".into()));
    }
    let active_rate: f64 = ledger.active_ports().map(|p| ledger.port_rates[p]).sum();
    let spatial = active_rate / total_rate;
    let temporal = forwarded / (ledger.duration * active_rate);
    Ok(PortUtilization {
        theta: spatial * temporal,
        spatial,
        temporal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub gamma: f64,
    pub delta: f64,
    pub theta: f64,
    pub theta_spatial: f64,
    pub theta_temporal: f64,
    pub mu: f64,
    pub eta: f64,
    pub effective_bytes: f64,
    pub received_bytes: f64,
    pub forwarded_bytes: f64,
    pub duration: f64,
    /// Sum of all egress port rates of the topology, bytes per second.
    pub capacity_rate: f64,
}

impl MetricsRecord {
    pub fn redundancy_ratio(&self) -> f64 {
        redundancy_ratio(self.gamma)
    }

    /// Switching efficiency evaluated directly as effective throughput over
    /// capacity, without going through the factors.
    pub fn eta_direct(&self) -> f64 {
        if self.duration == 0.0 {
            0.0
        } else {
            self.effective_bytes / (self.duration * self.capacity_rate)
        }
    }
}

pub fn compose_metrics(effective_bytes: f64, received_bytes: f64, ledger: &PortLedger) -> Result<MetricsRecord> {
    let ledger_received = ledger.received();
    if (ledger_received - received_bytes).abs() > 1e-9 * received_bytes.max(1.0) {
        return Err(Error::InconsistentLedger(format!(
            "received total {received_bytes} disagrees with per-GPU ledger sum {ledger_received}"
        )));
    }
    let forwarded = ledger.forwarded();
    let gamma = data_efficiency(effective_bytes, received_bytes)?;
    let delta = routing_efficiency(received_bytes, forwarded)?;
    let util = port_utilization(ledger)?;
    let mu = delta * util.theta;
    Ok(MetricsRecord {
        gamma,
        delta,
        theta: util.theta,
        theta_spatial: util.spatial,
        theta_temporal: util.temporal,
        mu,
        eta: gamma * mu,
        effective_bytes,
        received_bytes,
        forwarded_bytes: forwarded,
        duration: ledger.duration,
        capacity_rate: ledger.capacity_rate(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Weights proportional to workload duration (workloads run back to back).
    #[default]
    Duration,
    /// Every workload weighted equally.
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadWeight {
    pub workload: String,
    pub lambda: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedMetrics {
    pub weights: Vec<WorkloadWeight>,
    pub records: Vec<MetricsRecord>,
    /// Weighted sum of per-workload eta.
    pub eta_bar: f64,
    /// Pooled effective bytes over pooled capacity-time.
    pub eta_bar_pooled: f64,
    pub gamma_bar: f64,
    pub delta_bar: f64,
    pub theta_bar: f64,
    pub mu_bar: f64,
}

/// Folds per-workload records into suite-level metrics.
///
/// Each workload is stretched by `s_k = lambda_k * T_total / T_k` before the
/// byte totals are pooled, so with duration weighting every `s_k` is one and
/// the pooled ratios are plain ratios of sums. `gamma_bar`, `delta_bar` and
/// `theta_bar` are these pooled ratios; `eta_bar` is the weighted sum of
/// per-workload `eta`, and `eta_bar_pooled` the same quantity from the pooled
/// totals.
pub fn aggregate_metrics(records: &[(String, MetricsRecord)], weighting: Weighting) -> Result<AggregatedMetrics> {
    if records.is_empty() {
        return Err(Error::Domain("cannot aggregate an empty suite".into()));
    }
    for (id, r) in records {
        if !(r.duration > 0.0) {
            return Err(Error::Domain(format!("workload {id} has non-positive duration")));
        }
    }
    let capacity = records[0].1.capacity_rate;
    if records
        .iter()
        .any(|(_, r)| (r.capacity_rate - capacity).abs() > 1e-12 * capacity)
    {
        return Err(Error::Domain("workloads of one suite must share a topology capacity".into()));
    }
    let total_time: f64 = records.iter().map(|(_, r)| r.duration).sum();
    let k = records.len() as f64;
    let weights: Vec<WorkloadWeight> = records
        .iter()
        .map(|(id, r)| WorkloadWeight {
            workload: id.clone(),
            lambda: match weighting {
                Weighting::Duration => r.duration / total_time,
                Weighting::Equal => 1.0 / k,
            },
            duration: r.duration,
        })
        .collect();

    let mut eff = 0.0;
    let mut recv = 0.0;
    let mut fwd = 0.0;
    for ((_, r), w) in records.iter().zip(&weights) {
        let stretch = w.lambda * total_time / r.duration;
        eff += stretch * r.effective_bytes;
        recv += stretch * r.received_bytes;
        fwd += stretch * r.forwarded_bytes;
    }
    let eta_bar: f64 = records.iter().zip(&weights).map(|((_, r), w)| w.lambda * r.eta).sum();
    let eta_bar_pooled = eff / (total_time * capacity);
    let gamma_bar = data_efficiency(eff, recv)?;
    let delta_bar = routing_efficiency(recv, fwd)?;
    let theta_bar = fwd / (total_time * capacity);
    Ok(AggregatedMetrics {
        weights,
        records: records.iter().map(|(_, r)| r.clone()).collect(),
        eta_bar,
        eta_bar_pooled,
        gamma_bar,
        delta_bar,
        theta_bar,
        mu_bar: delta_bar * theta_bar,
    })
}
