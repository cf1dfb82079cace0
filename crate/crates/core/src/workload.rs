//! Parallelism enumeration, model scaling and group placement.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{
    build_torus, Fabric, GpuId, Topology, TorusParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dense,
    Moe,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dense => "dense",
            ModelKind::Moe => "moe",
        }
    }
}

/// One parallelism configuration.
///
/// Dense: `d * p * t = n`, with `e = 1` and `d_e = d_attn = d`.
/// MoE: `d_e * p * e = n`, `d_attn = d_e * e`, with `t = 1` and `d = d_attn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParallelismConfig {
    pub model: ModelKind,
    pub cluster_size: usize,
    pub d: usize,
    pub p: usize,
    pub t: usize,
    pub e: usize,
    pub d_e: usize,
    pub d_attn: usize,
}

impl ParallelismConfig {
    pub fn dense(d: usize, p: usize, t: usize) -> Self {
        ParallelismConfig {
            model: ModelKind::Dense,
            cluster_size: d * p * t,
            d,
            p,
            t,
            e: 1,
            d_e: d,
            d_attn: d,
        }
    }

    pub fn moe(d_e: usize, p: usize, e: usize) -> Self {
        ParallelismConfig {
            model: ModelKind::Moe,
            cluster_size: d_e * p * e,
            d: d_e * e,
            p,
            t: 1,
            e,
            d_e,
            d_attn: d_e * e,
        }
    }

    pub fn id(&self) -> String {
        match self.model {
            ModelKind::Dense => format!("dense-d{}-p{}-t{}", self.d, self.p, self.t),
            ModelKind::Moe => format!("moe-de{}-p{}-e{}", self.d_e, self.p, self.e),
        }
    }

    /// TP degree for dense models, EP degree for MoE.
    pub fn inner_degree(&self) -> usize {
        match self.model {
            ModelKind::Dense => self.t,
            ModelKind::Moe => self.e,
        }
    }

    /// Logical torus shape: one dimension per parallel axis.
    pub fn torus_dims(&self) -> [usize; 3] {
        match self.model {
            ModelKind::Dense => [self.t, self.p, self.d],
            ModelKind::Moe => [self.e, self.p, self.d_e],
        }
    }

    /// Torus dimension carrying the heaviest parallel traffic: TP or EP,
    /// or PP when there is no TP.
    pub fn intensive_dim(&self) -> usize {
        if self.inner_degree() == 1 {
            1
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constraints {
    /// Largest TP group (one high-bandwidth domain).
    pub max_tp: usize,
    pub min_pp: usize,
    /// `p <= n / pp_divisor`.
    pub pp_divisor: usize,
    pub min_ep: usize,
    /// `e <= n / ep_divisor`.
    pub ep_divisor: usize,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints {
            max_tp: 8,
            min_pp: 2,
            pp_divisor: 16,
            min_ep: 2,
            ep_divisor: 32,
        }
    }
}

fn powers_of_two_dividing(n: usize) -> impl Iterator<Item = usize> {
    (0..usize::BITS)
        .map(|k| 1usize << k)
        .take_while(move |&v| v <= n)
        .filter(move |v| n % v == 0)
}

/// All valid configurations for `n` GPUs, ordered by (t or e, p, d).
pub fn enumerate_configs(n: usize, model: ModelKind, c: &Constraints) -> Vec<ParallelismConfig> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let max_p = n / c.pp_divisor.max(1);
    for inner in powers_of_two_dividing(n) {
        let inner_ok = match model {
            ModelKind::Dense => inner <= c.max_tp,
            ModelKind::Moe => inner >= c.min_ep && inner <= n / c.ep_divisor.max(1),
        };
        if !inner_ok {
            continue;
        }
        for p in powers_of_two_dividing(n / inner) {
            if p < c.min_pp || p > max_p {
                continue;
            }
            let d = n / inner / p;
            out.push(match model {
                ModelKind::Dense => ParallelismConfig::dense(d, p, inner),
                ModelKind::Moe => ParallelismConfig::moe(d, p, inner),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenseCoefficients {
    /// Layers per pipeline stage.
    pub c_l: u64,
    /// Hidden size per TP rank.
    pub c_h: u64,
    /// Samples per DP rank per iteration.
    pub c_b: u64,
    pub seq_len: u64,
    pub dtype_bytes: u64,
    /// All-gathers (and as many reduce-scatters) per layer per iteration,
    /// forward and backward together.
    pub tp_collectives_per_layer: u64,
}

impl Default for DenseCoefficients {
    fn default() -> Self {
        DenseCoefficients {
            c_l: 12,
            c_h: 1536,
            c_b: 64,
            seq_len: 2048,
            dtype_bytes: 2,
            tp_collectives_per_layer: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MoeCoefficients {
    pub hidden: u64,
    /// Layers per pipeline stage.
    pub c_l: u64,
    /// Experts per EP rank.
    pub c_e: u64,
    /// Samples per attention-DP rank per iteration.
    pub c_b: u64,
    pub seq_len: u64,
    pub dtype_bytes: u64,
    pub expert_ffn: u64,
    /// Attention parameters per layer, in units of hidden^2.
    pub attn_params_factor: u64,
    /// All-to-all rounds per layer (forward and backward).
    pub a2a_passes: u64,
    pub include_edp: bool,
}

impl Default for MoeCoefficients {
    fn default() -> Self {
        MoeCoefficients {
            hidden: 7168,
            c_l: 8,
            c_e: 1,
            c_b: 8,
            seq_len: 2048,
            dtype_bytes: 2,
            expert_ffn: 2048,
            attn_params_factor: 4,
            a2a_passes: 2,
            include_edp: true,
        }
    }
}

/// Scaling anchors. A missing set makes that model kind unscalable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Coefficients {
    pub dense: Option<DenseCoefficients>,
    pub moe: Option<MoeCoefficients>,
    pub microbatches: u64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Coefficients {
            dense: Some(DenseCoefficients::default()),
            moe: Some(MoeCoefficients::default()),
            microbatches: 8,
        }
    }
}

/// Per-iteration tensor sizes in bytes. Collective sizes are the full
/// tensor `D` of one aggregated primitive.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TensorSizes {
    /// TP all-gather (and reduce-scatter) tensor, all layers of a stage.
    pub tp_bytes: u64,
    /// Activation sent across one stage boundary in each direction.
    pub pp_bytes: u64,
    /// Gradient reduced within one DP (or attention-DP) group.
    pub dp_bytes: u64,
    /// Tokens held by one EP rank, all MoE layers and passes.
    pub a2a_bytes: u64,
    /// Expert gradient reduced within one EDP group.
    pub edp_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub config: ParallelismConfig,
    pub layers: u64,
    pub hidden: u64,
    pub experts: u64,
    pub routed_experts: u64,
    pub batch: u64,
    pub seq_len: u64,
    pub dtype_bytes: u64,
    pub microbatches: u64,
    pub include_edp: bool,
    pub sizes: TensorSizes,
}

impl WorkloadSpec {
    pub fn id(&self) -> String {
        self.config.id()
    }
}

pub fn scale_workload(config: &ParallelismConfig, coeffs: &Coefficients) -> Result<WorkloadSpec> {
    let (p, t) = (config.p as u64, config.t as u64);
    match config.model {
        ModelKind::Dense => {
            let c = coeffs
                .dense
                .as_ref()
                .ok_or_else(|| Error::Config("no dense scaling coefficients".into()))?;
            let hidden = c.c_h * t;
            let act = c.c_b * c.seq_len * hidden * c.dtype_bytes;
            let params = 12 * hidden * hidden * c.c_l / t;
            Ok(WorkloadSpec {
                config: *config,
                layers: c.c_l * p,
                hidden,
                experts: 0,
                routed_experts: 0,
                batch: c.c_b * config.d as u64,
                seq_len: c.seq_len,
                dtype_bytes: c.dtype_bytes,
                microbatches: coeffs.microbatches,
                include_edp: false,
                sizes: TensorSizes {
                    tp_bytes: if t > 1 { c.tp_collectives_per_layer * c.c_l * act } else { 0 },
                    pp_bytes: 2 * act / t,
                    dp_bytes: params * c.dtype_bytes,
                    a2a_bytes: 0,
                    edp_bytes: 0,
                },
            })
        }
        ModelKind::Moe => {
            let c = coeffs
                .moe
                .as_ref()
                .ok_or_else(|| Error::Config("no MoE scaling coefficients".into()))?;
            let e = config.e as u64;
            if e % 2 != 0 {
                return Err(Error::Config(format!("EP degree {e} must be even")));
            }
            let act = c.c_b * c.seq_len * c.hidden * c.dtype_bytes;
            Ok(WorkloadSpec {
                config: *config,
                layers: c.c_l * p,
                hidden: c.hidden,
                experts: c.c_e * e,
                routed_experts: e / 2,
                batch: c.c_b * config.d_attn as u64,
                seq_len: c.seq_len,
                dtype_bytes: c.dtype_bytes,
                microbatches: coeffs.microbatches,
                include_edp: c.include_edp,
                sizes: TensorSizes {
                    tp_bytes: 0,
                    pp_bytes: 2 * act,
                    dp_bytes: c.attn_params_factor * c.hidden * c.hidden * c.c_l * c.dtype_bytes,
                    a2a_bytes: c.a2a_passes * c.c_l * act,
                    edp_bytes: c.c_e * 3 * c.hidden * c.expert_ffn * c.c_l * c.dtype_bytes,
                },
            })
        }
    }
}

/// Groups of every parallel dimension, each in ring (or chain) order.
/// Unused dimensions hold singleton groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLayout {
    pub tp: Vec<Vec<GpuId>>,
    /// Pipeline chains, first stage first.
    pub pp: Vec<Vec<GpuId>>,
    pub dp: Vec<Vec<GpuId>>,
    pub ep: Vec<Vec<GpuId>>,
    pub edp: Vec<Vec<GpuId>>,
}

impl GroupLayout {
    pub fn dimensions(&self) -> [(&'static str, &Vec<Vec<GpuId>>); 5] {
        [
            ("tp", &self.tp),
            ("pp", &self.pp),
            ("dp", &self.dp),
            ("ep", &self.ep),
            ("edp", &self.edp),
        ]
    }
}

/// Logical torus for a configuration: each parallel axis gets its own
/// dimension, as an ideal optical reconfiguration would provide. A boost in
/// `base` is moved onto the configuration's intensive dimension.
pub fn torus_for_config(config: &ParallelismConfig, base: &TorusParams) -> Result<Topology> {
    let params = TorusParams {
        dims: config.torus_dims(),
        base_port_rate: base.base_port_rate,
        boosted_dim: base.boosted_dim.map(|(_, extra)| (config.intensive_dim(), extra)),
    };
    build_torus(config.cluster_size, &params)
}

/// Groups of `size` ranks at stride `stride` inside blocks of `size * stride`.
fn strided_groups(n: usize, size: usize, stride: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(n / size);
    for base in (0..n).step_by(size * stride) {
        for off in 0..stride {
            out.push((0..size).map(|i| base + off + i * stride).collect());
        }
    }
    out
}

/// Orders a group so that consecutive members on different servers share
/// a rail: servers visited in order, alternating direction within each.
fn snake_by_server(group: &mut [GpuId], server_size: usize) {
    group.sort_unstable();
    let mut start = 0;
    let mut parity = false;
    while start < group.len() {
        let server = group[start] / server_size;
        let end = start + group[start..].iter().take_while(|&&g| g / server_size == server).count();
        if parity {
            group[start..end].reverse();
        }
        parity = !parity;
        start = end;
    }
}

pub fn place_groups(config: &ParallelismConfig, topology: &Topology) -> Result<GroupLayout> {
    let n = config.cluster_size;
    if topology.gpu_count() != n {
        return Err(Error::Placement(format!(
            "configuration needs {n} GPUs, topology has {}",
            topology.gpu_count()
        )));
    }
    let (d, p, t, e, d_e) = (config.d, config.p, config.t, config.e, config.d_e);
    match topology.fabric() {
        Fabric::Rail(r) => {
            if t > r.server_size {
                return Err(Error::Placement(format!(
                    "TP group of {t} exceeds the {}-GPU server",
                    r.server_size
                )));
            }
            if r.server_size % t != 0 {
                return Err(Error::Placement(format!(
                    "TP group of {t} does not tile {}-GPU servers",
                    r.server_size
                )));
            }
            // Ranks map to GPUs directly; TP (or EP) varies fastest, then DP
            // (or EDP), then PP.
            let mut layout = match config.model {
                ModelKind::Dense => GroupLayout {
                    tp: strided_groups(n, t, 1),
                    pp: strided_groups(n, p, n / p),
                    dp: strided_groups(n, d, t),
                    ep: strided_groups(n, 1, 1),
                    edp: strided_groups(n, 1, 1),
                },
                ModelKind::Moe => GroupLayout {
                    tp: strided_groups(n, 1, 1),
                    pp: strided_groups(n, p, n / p),
                    dp: strided_groups(n, d_e * e, 1),
                    ep: strided_groups(n, e, 1),
                    edp: strided_groups(n, d_e, e),
                },
            };
            for groups in [&mut layout.tp, &mut layout.dp, &mut layout.ep, &mut layout.edp] {
                for g in groups.iter_mut() {
                    snake_by_server(g, r.server_size);
                }
            }
            Ok(layout)
        }
        Fabric::Torus(tl) => {
            let dims = config.torus_dims();
            if tl.dims != dims {
                return Err(Error::Placement(format!(
                    "torus {:?} does not match parallel shape {:?}",
                    tl.dims, dims
                )));
            }
            let [x, y, z] = dims;
            let line = |dim: usize| -> Vec<Vec<GpuId>> {
                let len = dims[dim];
                let stride = [1, x, x * y][dim];
                strided_groups(n, len, stride)
            };
            // X-Z plane of one Y coordinate as a snake cycle.
            let plane = |yy: usize| -> Vec<GpuId> {
                let mut v = Vec::with_capacity(x * z);
                for zz in 0..z {
                    for i in 0..x {
                        let xx = if zz % 2 == 0 { i } else { x - 1 - i };
                        v.push(tl.gpu_at([xx, yy, zz]));
                    }
                }
                v
            };
            Ok(match config.model {
                ModelKind::Dense => GroupLayout {
                    tp: line(0),
                    pp: line(1),
                    dp: line(2),
                    ep: strided_groups(n, 1, 1),
                    edp: strided_groups(n, 1, 1),
                },
                ModelKind::Moe => GroupLayout {
                    tp: strided_groups(n, 1, 1),
                    pp: line(1),
                    dp: (0..y).map(plane).collect(),
                    ep: line(0),
                    edp: line(2),
                },
            })
        }
    }
}

/// Plain-text suite manifest: one line per workload with its configuration,
/// hyperparameters and derived sizes.
pub fn suite_manifest(suite: &[WorkloadSpec]) -> String {
    let mut out = String::from(
        "# id model n d p t e d_e d_attn layers hidden experts k_r batch seq dtype tp_bytes pp_bytes dp_bytes a2a_bytes edp_bytes\n",
    );
    for w in suite {
        let c = &w.config;
        let s = &w.sizes;
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
            c.id(),
            c.model.name(),
            c.cluster_size,
            c.d,
            c.p,
            c.t,
            c.e,
            c.d_e,
            c.d_attn,
            w.layers,
            w.hidden,
            w.experts,
            w.routed_experts,
            w.batch,
            w.seq_len,
            w.dtype_bytes,
            s.tp_bytes,
            s.pp_bytes,
            s.dp_bytes,
            s.a2a_bytes,
            s.edp_bytes
        );
    }
    out
}
