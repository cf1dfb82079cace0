//! Expansion of a placed workload into phases of collective traffic.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{effective_volume, PrimitiveKind};
use crate::topology::{Fabric, GpuId, RouteMode, Topology};
use crate::workload::{GroupLayout, ModelKind, WorkloadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseTag {
    Tp,
    Pp,
    Dp,
    EpDispatch,
    EpCombine,
    Edp,
}

impl PhaseTag {
    pub fn name(self) -> &'static str {
        match self {
            PhaseTag::Tp => "tp",
            PhaseTag::Pp => "pp",
            PhaseTag::Dp => "dp",
            PhaseTag::EpDispatch => "ep-dispatch",
            PhaseTag::EpCombine => "ep-combine",
            PhaseTag::Edp => "edp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveInstance {
    pub kind: PrimitiveKind,
    /// Participants; `[src, dst]` for point-to-point.
    pub group: Vec<GpuId>,
    pub tensor_size: f64,
    pub routed_experts: usize,
    pub tag: PhaseTag,
}

impl PrimitiveInstance {
    pub fn effective_bytes(&self) -> Result<f64> {
        // A point-to-point primitive is one pair.
        let n = match self.kind {
            PrimitiveKind::PointToPoint => 1,
            _ => self.group.len(),
        };
        effective_volume(self.kind, n, self.tensor_size, self.routed_experts.max(1))
    }
}

/// `multiplicity` identical flows of `volume` bytes each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowClass {
    pub src: GpuId,
    pub dst: GpuId,
    pub volume: f64,
    pub multiplicity: u64,
}

impl FlowClass {
    pub fn bytes(&self) -> f64 {
        self.volume * self.multiplicity as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowSet {
    pub classes: Vec<FlowClass>,
}

impl FlowSet {
    pub fn total_bytes(&self) -> f64 {
        self.classes.iter().map(FlowClass::bytes).sum()
    }

    pub fn flow_count(&self) -> u64 {
        self.classes.iter().map(|c| c.multiplicity).sum()
    }

    pub fn sent_by(&self, g: GpuId) -> f64 {
        self.classes.iter().filter(|c| c.src == g).map(FlowClass::bytes).sum()
    }

    pub fn received_by(&self, g: GpuId) -> f64 {
        self.classes.iter().filter(|c| c.dst == g).map(FlowClass::bytes).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Traffic {
    Flows(FlowSet),
    /// Every ordered pair of `group` carries `pair_bytes`.
    UniformAllToAll { group: Vec<GpuId>, pair_bytes: f64 },
    /// Reduction inside the shared intra-server switch, which returns
    /// `bytes_per_member` to every member.
    SwitchReduction { group: Vec<GpuId>, bytes_per_member: f64 },
}

impl Traffic {
    /// Bytes delivered to endpoints.
    pub fn received_bytes(&self) -> f64 {
        match self {
            Traffic::Flows(f) => f.total_bytes(),
            Traffic::UniformAllToAll { group, pair_bytes } => {
                let n = group.len() as f64;
                pair_bytes * n * (n - 1.0)
            }
            Traffic::SwitchReduction { group, bytes_per_member } => bytes_per_member * group.len() as f64,
        }
    }

    /// Explicit flow classes; all-to-all is expanded pair by pair.
    pub fn to_flow_set(&self) -> FlowSet {
        match self {
            Traffic::Flows(f) => f.clone(),
            Traffic::UniformAllToAll { group, pair_bytes } => {
                let mut classes = Vec::with_capacity(group.len() * group.len().saturating_sub(1));
                for &s in group {
                    for &d in group {
                        if s != d {
                            classes.push(FlowClass {
                                src: s,
                                dst: d,
                                volume: *pair_bytes,
                                multiplicity: 1,
                            });
                        }
                    }
                }
                FlowSet { classes }
            }
            Traffic::SwitchReduction { .. } => FlowSet::default(),
        }
    }
}

/// The primitives of one group and the traffic they generate together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub primitives: Vec<PrimitiveInstance>,
    pub traffic: Traffic,
}

impl Unit {
    pub fn effective_bytes(&self) -> Result<f64> {
        self.primitives.iter().map(PrimitiveInstance::effective_bytes).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub tag: PhaseTag,
    /// Direction rule for torus routing in this phase.
    pub mode: RouteMode,
    pub units: Vec<Unit>,
}

impl Phase {
    pub fn effective_bytes(&self) -> Result<f64> {
        self.units.iter().map(Unit::effective_bytes).sum()
    }

    pub fn received_bytes(&self) -> f64 {
        self.units.iter().map(|u| u.traffic.received_bytes()).sum()
    }
}

/// Ring collective over `group` in ring order. Two counter-rotating rings
/// each carry half of every chunk, so each member sends to both ring
/// neighbors.
pub fn expand_ring_collective(kind: PrimitiveKind, group: &[GpuId], tensor_size: f64) -> FlowSet {
    let n = group.len();
    if n < 2 {
        return FlowSet::default();
    }
    let rounds = match kind {
        PrimitiveKind::AllGather | PrimitiveKind::ReduceScatter => 1.0,
        PrimitiveKind::AllReduce => 2.0,
        _ => 0.0,
    };
    let per_neighbor = rounds * tensor_size * (n - 1) as f64 / n as f64 / 2.0;
    let mut classes = Vec::with_capacity(2 * n);
    for i in 0..n {
        let g = group[i];
        for nb in [group[(i + 1) % n], group[(i + n - 1) % n]] {
            classes.push(FlowClass {
                src: g,
                dst: nb,
                volume: per_neighbor,
                multiplicity: 1,
            });
        }
    }
    FlowSet { classes }
}

pub fn expand_p2p(src: GpuId, dst: GpuId, tensor_size: f64) -> FlowSet {
    FlowSet {
        classes: vec![FlowClass {
            src,
            dst,
            volume: tensor_size,
            multiplicity: 1,
        }],
    }
}

/// Pipeline transfers along `chain`: `tensor_size` forward and backward
/// across every stage boundary, in `microbatches` equal flows.
pub fn expand_pp_chain(chain: &[GpuId], tensor_size: f64, microbatches: u64, tag: PhaseTag) -> Unit {
    let m = microbatches.max(1);
    let mut primitives = Vec::new();
    let mut classes = Vec::new();
    for w in chain.windows(2) {
        for (s, d) in [(w[0], w[1]), (w[1], w[0])] {
            primitives.push(PrimitiveInstance {
                kind: PrimitiveKind::PointToPoint,
                group: vec![s, d],
                tensor_size,
                routed_experts: 1,
                tag,
            });
            classes.push(FlowClass {
                src: s,
                dst: d,
                volume: tensor_size / m as f64,
                multiplicity: m,
            });
        }
    }
    Unit {
        primitives,
        traffic: Traffic::Flows(FlowSet { classes }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum A2aDirection {
    Dispatch,
    Combine,
}

/// Uniform all-to-all: every member holds `tensor_size` bytes of tokens and
/// sends each to `routed_experts` experts spread evenly over the group.
/// Combine returns the same volumes.
pub fn expand_a2a(group: &[GpuId], tensor_size: f64, routed_experts: usize, direction: A2aDirection, tag: PhaseTag) -> Unit {
    let n = group.len();
    let kind = match direction {
        A2aDirection::Dispatch => PrimitiveKind::AllToAllDispatch,
        A2aDirection::Combine => PrimitiveKind::AllToAllCombine,
    };
    let pair_bytes = if n < 2 {
        0.0
    } else {
        routed_experts as f64 * tensor_size / n as f64
    };
    Unit {
        primitives: vec![PrimitiveInstance {
            kind,
            group: group.to_vec(),
            tensor_size,
            routed_experts,
            tag,
        }],
        traffic: Traffic::UniformAllToAll {
            group: if n < 2 { Vec::new() } else { group.to_vec() },
            pair_bytes,
        },
    }
}

/// Reduce-scatter followed by all-gather on one ring.
fn ring_all_reduce_unit(group: &[GpuId], tensor_size: f64, tag: PhaseTag, first: PrimitiveKind) -> Unit {
    let second = if first == PrimitiveKind::AllGather {
        PrimitiveKind::ReduceScatter
    } else {
        PrimitiveKind::AllGather
    };
    let prim = |kind| PrimitiveInstance {
        kind,
        group: group.to_vec(),
        tensor_size,
        routed_experts: 1,
        tag,
    };
    Unit {
        primitives: vec![prim(first), prim(second)],
        traffic: Traffic::Flows(expand_ring_collective(PrimitiveKind::AllReduce, group, tensor_size)),
    }
}

/// Replaces every TP group that sits under one intra-server switch by an
/// in-switch all-reduce. Other groups and other phases are returned as is.
pub fn apply_inc_transform(phase: &Phase, topology: &Topology) -> Phase {
    let mut out = phase.clone();
    if phase.tag != PhaseTag::Tp {
        return out;
    }
    let Fabric::Rail(r) = topology.fabric() else {
        return out;
    };
    for unit in &mut out.units {
        let Some(first) = unit.primitives.first() else {
            continue;
        };
        let group = first.group.clone();
        let Some(&g0) = group.first() else {
            continue;
        };
        if group.len() < 2 || group.iter().any(|&g| r.server_of(g) != r.server_of(g0)) {
            continue;
        }
        let tensor_size = first.tensor_size;
        *unit = Unit {
            primitives: vec![PrimitiveInstance {
                kind: PrimitiveKind::AllReduce,
                group: group.clone(),
                tensor_size,
                routed_experts: 1,
                tag: PhaseTag::Tp,
            }],
            traffic: Traffic::SwitchReduction {
                group,
                bytes_per_member: tensor_size,
            },
        };
    }
    out
}

fn check_groups(name: &str, groups: &[Vec<GpuId>], size: usize, n: usize) -> Result<()> {
    let covered: usize = groups.iter().map(Vec::len).sum();
    if covered != n || groups.iter().any(|g| g.len() != size) {
        return Err(Error::Schedule(format!(
            "{name} groups do not match degree {size} over {n} GPUs"
        )));
    }
    Ok(())
}

/// Sequential phases of one training iteration. `a2a_mode` sets the torus
/// direction rule for expert all-to-all; every other phase uses shortest
/// routing.
pub fn build_iteration_schedule(spec: &WorkloadSpec, layout: &GroupLayout, a2a_mode: RouteMode) -> Result<Vec<Phase>> {
    let c = &spec.config;
    let n = c.cluster_size;
    let s = &spec.sizes;
    check_groups("pp", &layout.pp, c.p, n)?;
    let mut phases = Vec::new();
    let ring_phase = |tag: PhaseTag, groups: &[Vec<GpuId>], bytes: u64, first: PrimitiveKind| Phase {
        tag,
        mode: RouteMode::Shortest,
        units: groups
            .iter()
            .map(|g| ring_all_reduce_unit(g, bytes as f64, tag, first))
            .collect(),
    };
    match c.model {
        ModelKind::Dense => {
            check_groups("tp", &layout.tp, c.t, n)?;
            check_groups("dp", &layout.dp, c.d, n)?;
            if c.t >= 2 && s.tp_bytes > 0 {
                phases.push(ring_phase(PhaseTag::Tp, &layout.tp, s.tp_bytes, PrimitiveKind::AllGather));
            }
        }
        ModelKind::Moe => {
            check_groups("ep", &layout.ep, c.e, n)?;
            check_groups("edp", &layout.edp, c.d_e, n)?;
            check_groups("dp", &layout.dp, c.d_attn, n)?;
        }
    }
    if c.p >= 2 && s.pp_bytes > 0 {
        phases.push(Phase {
            tag: PhaseTag::Pp,
            mode: RouteMode::Shortest,
            units: layout
                .pp
                .iter()
                .map(|chain| expand_pp_chain(chain, s.pp_bytes as f64, spec.microbatches, PhaseTag::Pp))
                .collect(),
        });
    }
    if c.d_attn >= 2 && s.dp_bytes > 0 {
        phases.push(ring_phase(PhaseTag::Dp, &layout.dp, s.dp_bytes, PrimitiveKind::ReduceScatter));
    }
    if c.model == ModelKind::Moe {
        let k_r = spec.routed_experts as usize;
        if c.e >= 2 && s.a2a_bytes > 0 {
            for (tag, dir) in [
                (PhaseTag::EpDispatch, A2aDirection::Dispatch),
                (PhaseTag::EpCombine, A2aDirection::Combine),
            ] {
                phases.push(Phase {
                    tag,
                    mode: a2a_mode,
                    units: layout
                        .ep
                        .iter()
                        .map(|g| expand_a2a(g, s.a2a_bytes as f64, k_r, dir, tag))
                        .collect(),
                });
            }
        }
        if spec.include_edp && c.d_e >= 2 && s.edp_bytes > 0 {
            phases.push(ring_phase(PhaseTag::Edp, &layout.edp, s.edp_bytes, PrimitiveKind::ReduceScatter));
        }
    }
    Ok(phases)
}

/// Flow-set dump, one record per line:
///
/// ```text
/// flow <phase> <src> <dst> <volume> <multiplicity>
/// a2a <phase> <pair_bytes> <member>...
/// inc <phase> <bytes_per_member> <member>...
/// ```
pub fn dump_flows(phases: &[Phase]) -> String {
    let mut out = String::new();
    for ph in phases {
        for u in &ph.units {
            match &u.traffic {
                Traffic::Flows(f) => {
                    for c in &f.classes {
                        let _ = writeln!(out, "flow {} {} {} {} {}", ph.tag.name(), c.src, c.dst, c.volume, c.multiplicity);
                    }
                }
                Traffic::UniformAllToAll { group, pair_bytes } => {
                    let members: Vec<String> = group.iter().map(ToString::to_string).collect();
                    let _ = writeln!(out, "a2a {} {} {}", ph.tag.name(), pair_bytes, members.join(" "));
                }
                Traffic::SwitchReduction { group, bytes_per_member } => {
                    let members: Vec<String> = group.iter().map(ToString::to_string).collect();
                    let _ = writeln!(out, "inc {} {} {}", ph.tag.name(), bytes_per_member, members.join(" "));
                }
            }
        }
    }
    out
}
