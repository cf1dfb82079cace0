//! Network topologies and their egress-port inventories.
//!
//! A [`Topology`] is a directed graph whose every link is one egress port of
//! a switching element. GPUs themselves never own ports: in the rail fabric
//! the NIC uplinks are endpoints, in the torus the GPU-resident switch owns
//! the six ring ports.
//!
//! Routing is deterministic. [`Topology::paths`] enumerates the weighted
//! equal-cost paths of a pair explicitly, which is what the tests use as an
//! oracle. [`LoadAccumulator`] adds flow volumes to per-port byte counters
//! without materializing paths and is what the flow engine runs on.

mod rail;
mod torus;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use rail::{build_rail, RailLayout, RailParams};
pub use torus::{build_torus, cubic_dims, remap_torus_dimensions, TorusLayout, TorusParams};

pub type GpuId = usize;
pub type NodeId = usize;
pub type PortId = usize;

/// Bytes per second of a 400 Gb/s link.
pub const GBPS_400: f64 = 400e9 / 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Gpu,
    IntraServerSwitch,
    LeafSwitch,
    SpineSwitch,
    CoreSwitch,
    GpuResidentSwitch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    Core,
    Spine,
    Leaf,
    IntraServer,
    GpuResident,
}

impl Tier {
    pub fn name(self) -> &'static str {
        match self {
            Tier::Core => "core",
            Tier::Spine => "spine",
            Tier::Leaf => "leaf",
            Tier::IntraServer => "intra-server",
            Tier::GpuResident => "gpu-resident",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchKind {
    Torus3D,
    RailOptimized,
}

/// One egress port and the link it drives. The link index is the port id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub src: NodeId,
    pub dst: NodeId,
    pub rate: f64,
    pub tier: Tier,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PortInventory {
    tiers: BTreeMap<Tier, Vec<PortId>>,
    rates: BTreeMap<Tier, f64>,
}

impl PortInventory {
    fn from_links(links: &[Link]) -> Self {
        let mut inv = PortInventory::default();
        for (id, link) in links.iter().enumerate() {
            inv.tiers.entry(link.tier).or_default().push(id);
            *inv.rates.entry(link.tier).or_default() += link.rate;
        }
        inv
    }

    pub fn ports(&self, tier: Tier) -> &[PortId] {
        self.tiers.get(&tier).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn tier_rate(&self, tier: Tier) -> f64 {
        self.rates.get(&tier).copied().unwrap_or(0.0)
    }

    pub fn tiers(&self) -> impl Iterator<Item = Tier> + '_ {
        self.tiers.keys().copied()
    }

    pub fn port_count(&self) -> usize {
        self.tiers.values().map(Vec::len).sum()
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Fabric {
    Torus(TorusLayout),
    Rail(RailLayout),
}

/// How flows pick directions around a torus ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouteMode {
    /// Minimal ring distance; exact half-way ties split evenly.
    #[default]
    Shortest,
    /// Always travel in the positive direction of each dimension.
    Unidirectional,
}

/// One equal-cost path and the share of the pair's volume it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPath {
    pub ports: Vec<PortId>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    nodes: Vec<NodeKind>,
    links: Vec<Link>,
    inventory: PortInventory,
    gpu_count: usize,
    fabric: Fabric,
}

impl Topology {
    fn assemble(nodes: Vec<NodeKind>, links: Vec<Link>, gpu_count: usize, fabric: Fabric) -> Self {
        let inventory = PortInventory::from_links(&links);
        Topology {
            nodes,
            links,
            inventory,
            gpu_count,
            fabric,
        }
    }

    pub fn arch(&self) -> ArchKind {
        match self.fabric {
            Fabric::Torus(_) => ArchKind::Torus3D,
            Fabric::Rail(_) => ArchKind::RailOptimized,
        }
    }

    pub fn fabric(&self) -> &Fabric {
        &self.fabric
    }

    pub fn gpu_count(&self) -> usize {
        self.gpu_count
    }

    pub fn nodes(&self) -> &[NodeKind] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn port_count(&self) -> usize {
        self.links.len()
    }

    pub fn inventory(&self) -> &PortInventory {
        &self.inventory
    }

    pub fn port_rates(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.rate).collect()
    }

    /// Egress ports owned by `node`.
    pub fn egress_ports(&self, node: NodeId) -> Vec<PortId> {
        self.links
            .iter()
            .enumerate()
            .filter(|(_, l)| l.src == node)
            .map(|(p, _)| p)
            .collect()
    }

    fn check_pair(&self, src: GpuId, dst: GpuId) -> Result<()> {
        if src >= self.gpu_count || dst >= self.gpu_count {
            return Err(Error::Unreachable { src, dst });
        }
        Ok(())
    }

    /// All equal-cost shortest paths from `src` to `dst` with their split
    /// weights. A GPU sending to itself uses no ports.
    pub fn paths(&self, src: GpuId, dst: GpuId, mode: RouteMode) -> Result<Vec<WeightedPath>> {
        self.check_pair(src, dst)?;
        if src == dst {
            return Ok(Vec::new());
        }
        match &self.fabric {
            Fabric::Torus(t) => Ok(t.paths(src, dst, mode)),
            Fabric::Rail(r) => Ok(r.paths(src, dst)),
        }
    }

    pub fn accumulator(&self) -> LoadAccumulator<'_> {
        let inner = match &self.fabric {
            Fabric::Torus(_) => AccState::Torus,
            Fabric::Rail(r) => AccState::Rail(rail::RailAcc::new(r)),
        };
        LoadAccumulator {
            topo: self,
            port_bytes: vec![0.0; self.links.len()],
            received: vec![0.0; self.gpu_count],
            inner,
        }
    }

    /// Plain-text dump: one `node`, `port` or `tier` record per line.
    ///
    /// ```text
    /// topology <arch> gpus=<n> ports=<p> total_rate=<bytes/s>
    /// node <id> <kind>
    /// port <id> <src-node> <dst-node> <tier> <rate>
    /// tier <name> ports=<count> rate=<bytes/s>
    /// ```
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        let arch = match self.arch() {
            ArchKind::Torus3D => "torus3d",
            ArchKind::RailOptimized => "rail-optimized",
        };
        let _ = writeln!(
            out,
            "topology {arch} gpus={} ports={} total_rate={}",
            self.gpu_count,
            self.links.len(),
            self.inventory.total_rate()
        );
        for (id, kind) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "node {id} {kind:?}");
        }
        for (id, l) in self.links.iter().enumerate() {
            let _ = writeln!(out, "port {id} {} {} {} {}", l.src, l.dst, l.tier.name(), l.rate);
        }
        for tier in self.inventory.tiers() {
            let _ = writeln!(
                out,
                "tier {} ports={} rate={}",
                tier.name(),
                self.inventory.ports(tier).len(),
                self.inventory.tier_rate(tier)
            );
        }
        out
    }
}

/// Sum of every egress port rate in the topology.
pub fn port_inventory_total(topology: &Topology) -> f64 {
    topology.inventory().total_rate()
}

enum AccState {
    Torus,
    Rail(rail::RailAcc),
}

/// Adds flow volumes to per-port and per-GPU byte counters.
pub struct LoadAccumulator<'a> {
    topo: &'a Topology,
    port_bytes: Vec<f64>,
    received: Vec<f64>,
    inner: AccState,
}

impl<'a> LoadAccumulator<'a> {
    /// Routes `bytes` from `src` to `dst` and charges every traversed port.
    pub fn add_flow(&mut self, src: GpuId, dst: GpuId, bytes: f64, mode: RouteMode) -> Result<()> {
        self.topo.check_pair(src, dst)?;
        if src == dst || bytes == 0.0 {
            return Ok(());
        }
        self.received[dst] += bytes;
        match (&self.topo.fabric, &mut self.inner) {
            (Fabric::Torus(t), _) => t.charge(src, dst, bytes, mode, &mut self.port_bytes),
            (Fabric::Rail(r), AccState::Rail(acc)) => acc.charge(r, src, dst, bytes, &mut self.port_bytes),
            _ => unreachable!("accumulator state matches fabric"),
        }
        Ok(())
    }

    /// Uniform all-to-all over `group`: every ordered pair carries
    /// `pair_bytes`. Uses closed-form per-port totals when the fabric
    /// supports it and falls back to pairwise routing otherwise.
    pub fn add_uniform_all_to_all(&mut self, group: &[GpuId], pair_bytes: f64, mode: RouteMode) -> Result<()> {
        for &g in group {
            self.topo.check_pair(g, g)?;
        }
        if group.len() < 2 || pair_bytes == 0.0 {
            return Ok(());
        }
        let handled = match (&self.topo.fabric, &mut self.inner) {
            (Fabric::Torus(t), _) => t.charge_all_to_all(group, pair_bytes, mode, &mut self.port_bytes),
            (Fabric::Rail(r), AccState::Rail(acc)) => {
                acc.charge_all_to_all(r, group, pair_bytes, &mut self.port_bytes);
                true
            }
            _ => unreachable!("accumulator state matches fabric"),
        };
        if handled {
            let per_member = pair_bytes * (group.len() - 1) as f64;
            for &g in group {
                self.received[g] += per_member;
            }
            return Ok(());
        }
        self.add_all_to_all_pairwise(group, pair_bytes, mode)
    }

    /// Uniform all-to-all expanded pair by pair.
    pub fn add_all_to_all_pairwise(&mut self, group: &[GpuId], pair_bytes: f64, mode: RouteMode) -> Result<()> {
        for &s in group {
            for &d in group {
                if s != d {
                    self.add_flow(s, d, pair_bytes, mode)?;
                }
            }
        }
        Ok(())
    }

    /// In-switch reduction: each member pushes its tensor into the shared
    /// intra-server switch, which returns `bytes_per_member` of reduced data
    /// to every member. Only the switch egress is charged.
    pub fn add_switch_reduction(&mut self, group: &[GpuId], bytes_per_member: f64) -> Result<()> {
        let Fabric::Rail(r) = &self.topo.fabric else {
            return Err(Error::Domain("in-switch reduction needs an intra-server switch".into()));
        };
        let Some(&first) = group.first() else {
            return Ok(());
        };
        let server = r.server_of(first);
        if group.iter().any(|&g| r.server_of(g) != server) {
            return Err(Error::Domain("in-switch reduction group spans servers".into()));
        }
        for &g in group {
            self.port_bytes[r.intra_port(g)] += bytes_per_member;
            self.received[g] += bytes_per_member;
        }
        Ok(())
    }

    /// Finalizes deferred fabric loads and returns `(port bytes, per-GPU
    /// received bytes)`.
    pub fn finish(mut self) -> (Vec<f64>, Vec<f64>) {
        if let (Fabric::Rail(r), AccState::Rail(acc)) = (&self.topo.fabric, &self.inner) {
            acc.flush(r, &mut self.port_bytes);
        }
        (self.port_bytes, self.received)
    }
}
