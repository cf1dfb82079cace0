use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Fabric, GpuId, Link, NodeKind, PortId, Tier, Topology, WeightedPath, GBPS_400};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RailParams {
    pub gpus_per_server: usize,
    /// NIC rails per server; local GPU `i` attaches to rail `i % rails`.
    /// Unset means one rail per GPU of the server.
    pub rail_count: Option<usize>,
    pub switch_radix: usize,
    /// Intra-server to inter-server per-GPU bandwidth ratio.
    pub tiered_ratio: f64,
    pub plane_count: usize,
    /// Total inter-server NIC rate per GPU, split evenly over the planes.
    pub base_nic_rate: f64,
    /// Leaf down to up capacity ratio; 1 is non-blocking.
    pub oversubscription: f64,
}

impl Default for RailParams {
    fn default() -> Self {
        RailParams {
            gpus_per_server: 8,
            rail_count: None,
            switch_radix: 64,
            tiered_ratio: 9.0,
            plane_count: 1,
            base_nic_rate: GBPS_400,
            oversubscription: 1.0,
        }
    }
}

impl RailParams {
    pub fn with_radix(switch_radix: usize) -> Self {
        RailParams {
            switch_radix,
            ..RailParams::default()
        }
    }
}

/// Index arithmetic of a rail-optimized fabric.
///
/// Each plane is an independent folded Clos whose switches run at
/// `radix * planes` ports of `nic_rate / planes` (breakout), so adding planes
/// raises the per-plane radix and postpones extra tiers. The GPUs of one
/// rail are numbered by slot (server-major); leaves are indexed block-major:
/// leaf `b * rails + l` serves the slots of block `b` on rail `l`. With
/// three tiers, a pod is `radix/2` consecutive leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RailLayout {
    pub gpus: usize,
    pub server_size: usize,
    pub rails: usize,
    pub servers: usize,
    pub planes: usize,
    /// Ports per switch in one plane.
    pub plane_radix: usize,
    /// Switching tiers above the servers: 1 (leaf), 2 (+spine) or 3 (+core).
    pub tiers: usize,
    /// Rail slots per leaf.
    pub block: usize,
    /// Leaves per plane.
    pub leaves: usize,
    pub pods: usize,
    base_leaf_down: PortId,
    base_leaf_up: PortId,
    base_spine_down: PortId,
    base_spine_up: PortId,
    base_core_down: PortId,
}

impl RailLayout {
    fn half(&self) -> usize {
        self.plane_radix / 2
    }

    pub fn server_of(&self, g: GpuId) -> usize {
        g / self.server_size
    }

    pub fn rail_of(&self, g: GpuId) -> usize {
        g % self.server_size % self.rails
    }

    /// Position of `g` among the GPUs of its rail.
    pub fn slot_of(&self, g: GpuId) -> usize {
        g / self.rails
    }

    pub fn leaf_of(&self, g: GpuId) -> usize {
        (self.slot_of(g) / self.block) * self.rails + self.rail_of(g)
    }

    pub fn pod_of_leaf(&self, leaf: usize) -> usize {
        if self.tiers == 3 {
            leaf / self.half()
        } else {
            0
        }
    }

    /// Intra-server switch egress toward GPU `g`.
    pub fn intra_port(&self, g: GpuId) -> PortId {
        g
    }

    pub fn leaf_down_port(&self, plane: usize, g: GpuId) -> PortId {
        self.base_leaf_down + plane * self.gpus + g
    }

    pub fn leaf_up_port(&self, plane: usize, leaf: usize, spine: usize) -> PortId {
        self.base_leaf_up + (plane * self.leaves + leaf) * self.half() + spine
    }

    /// Egress of spine `spine` (within the leaf's pod) toward `leaf`.
    pub fn spine_down_port(&self, plane: usize, leaf: usize, spine: usize) -> PortId {
        self.base_spine_down + (plane * self.leaves + leaf) * self.half() + spine
    }

    pub fn spine_up_port(&self, plane: usize, pod: usize, spine: usize, core: usize) -> PortId {
        let h = self.half();
        self.base_spine_up + ((plane * self.pods + pod) * h + spine) * h + core
    }

    /// Egress of core `(spine, core)` toward the spine of the same index in
    /// `pod`.
    pub fn core_down_port(&self, plane: usize, spine: usize, core: usize, pod: usize) -> PortId {
        let h = self.half();
        self.base_core_down + ((plane * h + spine) * h + core) * self.pods + pod
    }

    /// GPU on the source server that relays cross-rail traffic when the
    /// rails are not interconnected.
    fn relay(&self, src: GpuId, dst: GpuId) -> GpuId {
        self.slot_of(src) * self.rails + self.rail_of(dst)
    }

    pub(super) fn paths(&self, src: GpuId, dst: GpuId) -> Vec<WeightedPath> {
        if self.server_of(src) == self.server_of(dst) {
            return vec![WeightedPath {
                ports: vec![self.intra_port(dst)],
                weight: 1.0,
            }];
        }
        let p = self.planes as f64;
        let h = self.half();
        let mut out = Vec::new();
        for q in 0..self.planes {
            let down = self.leaf_down_port(q, dst);
            if self.tiers == 1 {
                let mut ports = Vec::with_capacity(2);
                if self.rail_of(src) != self.rail_of(dst) {
                    ports.push(self.intra_port(self.relay(src, dst)));
                }
                ports.push(down);
                out.push(WeightedPath { ports, weight: 1.0 / p });
                continue;
            }
            let (a, b) = (self.leaf_of(src), self.leaf_of(dst));
            let (pa, pb) = (self.pod_of_leaf(a), self.pod_of_leaf(b));
            if a == b {
                out.push(WeightedPath {
                    ports: vec![down],
                    weight: 1.0 / p,
                });
            } else if pa == pb {
                for j in 0..h {
                    out.push(WeightedPath {
                        ports: vec![self.leaf_up_port(q, a, j), self.spine_down_port(q, b, j), down],
                        weight: 1.0 / (p * h as f64),
                    });
                }
            } else {
                for j in 0..h {
                    for c in 0..h {
                        out.push(WeightedPath {
                            ports: vec![
                                self.leaf_up_port(q, a, j),
                                self.spine_up_port(q, pa, j, c),
                                self.core_down_port(q, j, c, pb),
                                self.spine_down_port(q, b, j),
                                down,
                            ],
                            weight: 1.0 / (p * (h * h) as f64),
                        });
                    }
                }
            }
        }
        out
    }
}

/// Deferred fabric loads. Clos traffic is recorded per leaf and per pod and
/// spread over the equal-cost ports in [`RailAcc::flush`]; the even ECMP split
/// makes every up or down port of a switch see the same share.
pub(super) struct RailAcc {
    leaf_down: Vec<f64>,
    leaf_up: Vec<f64>,
    spine_in: Vec<f64>,
    pod_out: Vec<f64>,
    pod_in: Vec<f64>,
}

impl RailAcc {
    pub(super) fn new(r: &RailLayout) -> Self {
        RailAcc {
            leaf_down: vec![0.0; r.gpus],
            leaf_up: vec![0.0; r.leaves],
            spine_in: vec![0.0; r.leaves],
            pod_out: vec![0.0; r.pods],
            pod_in: vec![0.0; r.pods],
        }
    }

    pub(super) fn charge(&mut self, r: &RailLayout, src: GpuId, dst: GpuId, bytes: f64, port_bytes: &mut [f64]) {
        if r.server_of(src) == r.server_of(dst) {
            port_bytes[r.intra_port(dst)] += bytes;
            return;
        }
        self.leaf_down[dst] += bytes;
        if r.tiers == 1 {
            if r.rail_of(src) != r.rail_of(dst) {
                port_bytes[r.intra_port(r.relay(src, dst))] += bytes;
            }
            return;
        }
        let (a, b) = (r.leaf_of(src), r.leaf_of(dst));
        if a == b {
            return;
        }
        self.leaf_up[a] += bytes;
        self.spine_in[b] += bytes;
        let (pa, pb) = (r.pod_of_leaf(a), r.pod_of_leaf(b));
        if pa != pb {
            self.pod_out[pa] += bytes;
            self.pod_in[pb] += bytes;
        }
    }

    /// Uniform all-to-all from member counts per server, leaf and pod,
    /// without enumerating pairs.
    pub(super) fn charge_all_to_all(&mut self, r: &RailLayout, group: &[GpuId], pair_bytes: f64, port_bytes: &mut [f64]) {
        let e = group.len() as f64;
        let mut per_server: BTreeMap<usize, usize> = BTreeMap::new();
        let mut per_leaf: BTreeMap<usize, usize> = BTreeMap::new();
        let mut per_pod: BTreeMap<usize, usize> = BTreeMap::new();
        let mut per_rail: BTreeMap<usize, usize> = BTreeMap::new();
        // members sharing a server are reached in-server, whatever their leaf
        let mut server_leaf: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut server_pod: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &g in group {
            let (s, leaf) = (r.server_of(g), r.leaf_of(g));
            let pod = r.pod_of_leaf(leaf);
            *per_server.entry(s).or_default() += 1;
            *per_leaf.entry(leaf).or_default() += 1;
            *per_pod.entry(pod).or_default() += 1;
            *per_rail.entry(r.rail_of(g)).or_default() += 1;
            *server_leaf.entry((s, leaf)).or_default() += 1;
            *server_pod.entry((s, pod)).or_default() += 1;
        }
        for &g in group {
            let s = r.server_of(g);
            let m_s = per_server[&s] as f64;
            port_bytes[r.intra_port(g)] += pair_bytes * (m_s - 1.0);
            self.leaf_down[g] += pair_bytes * (e - m_s);
            if r.tiers == 1 {
                continue;
            }
            let a = r.leaf_of(g);
            let off_leaf = e - m_s - (per_leaf[&a] - server_leaf[&(s, a)]) as f64;
            self.leaf_up[a] += pair_bytes * off_leaf;
            self.spine_in[a] += pair_bytes * off_leaf;
            let pod = r.pod_of_leaf(a);
            let off_pod = e - m_s - (per_pod[&pod] - server_pod[&(s, pod)]) as f64;
            self.pod_out[pod] += pair_bytes * off_pod;
            self.pod_in[pod] += pair_bytes * off_pod;
        }
        if r.tiers == 1 {
            // cross-rail traffic leaving a server enters the destination rail
            // at the source's relay of the same slot
            let members: std::collections::BTreeSet<GpuId> = group.iter().copied().collect();
            let mut per_slot: BTreeMap<usize, usize> = BTreeMap::new();
            let mut per_server_rail: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            for &g in group {
                *per_slot.entry(r.slot_of(g)).or_default() += 1;
                *per_server_rail.entry((r.server_of(g), r.rail_of(g))).or_default() += 1;
            }
            for (&slot, &m_slot) in &per_slot {
                let s = slot * r.rails / r.server_size;
                for (&rail, &on_rail) in &per_rail {
                    let relay = slot * r.rails + rail;
                    let here = usize::from(members.contains(&relay));
                    let srcs = m_slot - here;
                    let dsts = on_rail - per_server_rail.get(&(s, rail)).copied().unwrap_or(0);
                    if srcs > 0 && dsts > 0 {
                        port_bytes[r.intra_port(relay)] += pair_bytes * (srcs * dsts) as f64;
                    }
                }
            }
        }
    }

    pub(super) fn flush(&self, r: &RailLayout, port_bytes: &mut [f64]) {
        let p = r.planes as f64;
        let h = r.half();
        for q in 0..r.planes {
            for (g, &b) in self.leaf_down.iter().enumerate() {
                if b != 0.0 {
                    port_bytes[r.leaf_down_port(q, g)] += b / p;
                }
            }
            if r.tiers == 1 {
                continue;
            }
            for leaf in 0..r.leaves {
                let (up, down) = (self.leaf_up[leaf], self.spine_in[leaf]);
                for j in 0..h {
                    if up != 0.0 {
                        port_bytes[r.leaf_up_port(q, leaf, j)] += up / (p * h as f64);
                    }
                    if down != 0.0 {
                        port_bytes[r.spine_down_port(q, leaf, j)] += down / (p * h as f64);
                    }
                }
            }
            if r.tiers < 3 {
                continue;
            }
            let share = p * (h * h) as f64;
            for pod in 0..r.pods {
                let (out, inb) = (self.pod_out[pod], self.pod_in[pod]);
                for j in 0..h {
                    for c in 0..h {
                        if out != 0.0 {
                            port_bytes[r.spine_up_port(q, pod, j, c)] += out / share;
                        }
                        if inb != 0.0 {
                            port_bytes[r.core_down_port(q, j, c, pod)] += inb / share;
                        }
                    }
                }
            }
        }
    }
}

pub fn build_rail(cluster_size: usize, params: &RailParams) -> Result<Topology> {
    let server_size = params.gpus_per_server;
    if server_size == 0 || cluster_size % server_size != 0 {
        return Err(Error::Construction(format!(
            "{cluster_size} GPUs do not fill servers of {server_size}"
        )));
    }
    let rails = params.rail_count.unwrap_or(server_size);
    if rails == 0 || server_size % rails != 0 {
        return Err(Error::Construction(format!(
            "{rails} rails do not divide servers of {server_size}"
        )));
    }
    if params.switch_radix < 2 || params.switch_radix % 2 != 0 {
        return Err(Error::Construction(format!(
            "switch radix {} must be even",
            params.switch_radix
        )));
    }
    if params.plane_count == 0 {
        return Err(Error::Construction("at least one plane is required".into()));
    }
    if !(params.base_nic_rate > 0.0 && params.tiered_ratio > 0.0 && params.oversubscription >= 1.0) {
        return Err(Error::Construction(
            "rates and tiered ratio must be positive, oversubscription at least 1".into(),
        ));
    }
    let servers = cluster_size / server_size;
    let slots = cluster_size / rails;
    let k = params.switch_radix * params.plane_count;
    let h = k / 2;
    let (tiers, block) = if slots <= k {
        (1, slots.max(1))
    } else {
        let blocks = slots.div_ceil(h);
        let leaves = rails * blocks;
        if leaves <= k {
            (2, h)
        } else if leaves.div_ceil(h) <= k {
            (3, h)
        } else {
            return Err(Error::Construction(format!(
                "{cluster_size} GPUs need {leaves} leaves per plane; three tiers of radix {k} connect at most {} (raise plane_count or radix)",
                k * h
            )));
        }
    };
    let leaves = rails * slots.div_ceil(block);
    let pods = if tiers == 3 { leaves.div_ceil(h) } else { 1 };
    let planes = params.plane_count;
    let n = cluster_size;

    let base_leaf_down = n;
    let base_leaf_up = base_leaf_down + planes * n;
    let lu_count = if tiers >= 2 { planes * leaves * h } else { 0 };
    let base_spine_down = base_leaf_up + lu_count;
    let base_spine_up = base_spine_down + lu_count;
    let su_count = if tiers == 3 { planes * pods * h * h } else { 0 };
    let base_core_down = base_spine_up + su_count;

    let layout = RailLayout {
        gpus: n,
        server_size,
        rails,
        servers,
        planes,
        plane_radix: k,
        tiers,
        block,
        leaves,
        pods,
        base_leaf_down,
        base_leaf_up,
        base_spine_down,
        base_spine_up,
        base_core_down,
    };

    // Node ids: GPUs, intra-server switches, then per plane leaves, spines
    // and cores.
    let spines_per_plane = match tiers {
        1 => 0,
        2 => h,
        _ => pods * h,
    };
    let cores_per_plane = if tiers == 3 { h * h } else { 0 };
    let switch_base = n;
    let leaf_base = switch_base + servers;
    let spine_base = leaf_base + planes * leaves;
    let core_base = spine_base + planes * spines_per_plane;
    let node_count = core_base + planes * cores_per_plane;
    let leaf_node = |q: usize, leaf: usize| leaf_base + q * leaves + leaf;
    let spine_node = |q: usize, pod: usize, j: usize| spine_base + q * spines_per_plane + pod * h + j;
    let core_node = |q: usize, j: usize, c: usize| core_base + q * cores_per_plane + j * h + c;

    let mut nodes = vec![NodeKind::Gpu; n];
    nodes.extend(std::iter::repeat(NodeKind::IntraServerSwitch).take(servers));
    nodes.extend(std::iter::repeat(NodeKind::LeafSwitch).take(planes * leaves));
    nodes.extend(std::iter::repeat(NodeKind::SpineSwitch).take(planes * spines_per_plane));
    nodes.extend(std::iter::repeat(NodeKind::CoreSwitch).take(planes * cores_per_plane));
    debug_assert_eq!(nodes.len(), node_count);

    let intra_rate = params.tiered_ratio * params.base_nic_rate;
    let rate = params.base_nic_rate / planes as f64;
    let up_rate = rate / params.oversubscription;
    let mut links = Vec::new();
    for g in 0..n {
        links.push(Link {
            src: switch_base + layout.server_of(g),
            dst: g,
            rate: intra_rate,
            tier: Tier::IntraServer,
        });
    }
    for q in 0..planes {
        for g in 0..n {
            links.push(Link {
                src: leaf_node(q, layout.leaf_of(g)),
                dst: g,
                rate,
                tier: Tier::Leaf,
            });
        }
    }
    if tiers >= 2 {
        for q in 0..planes {
            for leaf in 0..leaves {
                let pod = layout.pod_of_leaf(leaf);
                for j in 0..h {
                    links.push(Link {
                        src: leaf_node(q, leaf),
                        dst: spine_node(q, pod, j),
                        rate: up_rate,
                        tier: Tier::Leaf,
                    });
                }
            }
        }
        for q in 0..planes {
            for leaf in 0..leaves {
                let pod = layout.pod_of_leaf(leaf);
                for j in 0..h {
                    links.push(Link {
                        src: spine_node(q, pod, j),
                        dst: leaf_node(q, leaf),
                        rate,
                        tier: Tier::Spine,
                    });
                }
            }
        }
    }
    if tiers == 3 {
        for q in 0..planes {
            for pod in 0..pods {
                for j in 0..h {
                    for c in 0..h {
                        links.push(Link {
                            src: spine_node(q, pod, j),
                            dst: core_node(q, j, c),
                            rate,
                            tier: Tier::Spine,
                        });
                    }
                }
            }
        }
        for q in 0..planes {
            for j in 0..h {
                for c in 0..h {
                    for pod in 0..pods {
                        links.push(Link {
                            src: core_node(q, j, c),
                            dst: spine_node(q, pod, j),
                            rate,
                            tier: Tier::Core,
                        });
                    }
                }
            }
        }
    }
    debug_assert_eq!(links.len(), base_core_down + if tiers == 3 { planes * h * h * pods } else { 0 });
    Ok(Topology::assemble(nodes, links, n, Fabric::Rail(layout)))
}
