use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Weighting;
use crate::topology::{RailParams, RouteMode, TorusParams, GBPS_400};
use crate::workload::{Coefficients, Constraints, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Torus,
    Rail,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Torus => "torus",
            Arch::Rail => "rail",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ArchSelect {
    Torus,
    Rail,
    #[default]
    Both,
}

impl ArchSelect {
    pub fn archs(self) -> Vec<Arch> {
        match self {
            ArchSelect::Torus => vec![Arch::Torus],
            ArchSelect::Rail => vec![Arch::Rail],
            ArchSelect::Both => vec![Arch::Torus, Arch::Rail],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelSelect {
    Dense,
    Moe,
    #[default]
    Both,
}

impl ModelSelect {
    pub fn models(self) -> Vec<ModelKind> {
        match self {
            ModelSelect::Dense => vec![ModelKind::Dense],
            ModelSelect::Moe => vec![ModelKind::Moe],
            ModelSelect::Both => vec![ModelKind::Dense, ModelKind::Moe],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    #[default]
    None,
    TieredRatio,
    ServerSize,
    Inc,
    ClusterScale,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::None => "none",
            SweepAxis::TieredRatio => "tiered-ratio",
            SweepAxis::ServerSize => "server-size",
            SweepAxis::Inc => "inc",
            SweepAxis::ClusterScale => "cluster-scale",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TorusConfig {
    /// Per-direction link rate, bytes per second.
    pub base_port_rate: f64,
    /// Boost on the most communication-intensive dimension; 1 means none.
    pub tiered_ratio: usize,
}

impl Default for TorusConfig {
    fn default() -> Self {
        TorusConfig {
            base_port_rate: GBPS_400,
            tiered_ratio: 1,
        }
    }
}

impl TorusConfig {
    /// Parameters for a cluster of `n` GPUs; the dims are replaced per
    /// workload.
    pub fn params(&self, n: usize) -> TorusParams {
        let mut p = TorusParams::new(crate::topology::cubic_dims(n));
        p.base_port_rate = self.base_port_rate;
        // the boosted dim is re-targeted per workload
        p.with_ratio(0, self.tiered_ratio)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub tiered_ratios: Vec<usize>,
    pub server_sizes: Vec<usize>,
    pub cluster_scales: Vec<usize>,
    pub plane_counts: Vec<usize>,
    /// Server-size sweeps keep the baseline NIC rail count, so larger
    /// servers spread several GPUs over each rail.
    pub keep_rails: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            axis: SweepAxis::None,
            tiered_ratios: (1..=17).collect(),
            server_sizes: vec![8, 16, 32, 64, 128, 256],
            cluster_scales: vec![512, 1024, 2048, 4096, 8192, 16384, 32768, 65536],
            plane_counts: vec![1, 2, 4, 8],
            keep_rails: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub cluster_size: usize,
    pub arch: ArchSelect,
    pub model: ModelSelect,
    pub weighting: Weighting,
    /// Torus direction rule for expert all-to-all traffic.
    pub a2a_routing: RouteMode,
    pub torus: TorusConfig,
    pub rail: RailParams,
    pub constraints: Constraints,
    pub coefficients: Coefficients,
    pub sweep: SweepConfig,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            cluster_size: 4096,
            arch: ArchSelect::Both,
            model: ModelSelect::Both,
            weighting: Weighting::Duration,
            a2a_routing: RouteMode::Unidirectional,
            torus: TorusConfig::default(),
            rail: RailParams::default(),
            constraints: Constraints::default(),
            coefficients: Coefficients::default(),
            sweep: SweepConfig::default(),
            out_dir: PathBuf::from("results"),
            jobs: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.cluster_size == 0 {
            return bad("cluster_size must be positive".into());
        }
        if self.torus.tiered_ratio == 0 || !(self.torus.base_port_rate > 0.0) {
            return bad("torus ratio and port rate must be positive".into());
        }
        let r = &self.rail;
        if r.gpus_per_server == 0 || r.switch_radix < 2 || !(r.tiered_ratio > 0.0) || !(r.base_nic_rate > 0.0) {
            return bad("rail parameters must be positive".into());
        }
        if ![1, 2, 4, 8].contains(&r.plane_count) {
            return bad(format!("plane_count must be 1, 2, 4 or 8, got {}", r.plane_count));
        }
        let s = &self.sweep;
        if s.tiered_ratios.iter().any(|&v| v == 0) {
            return bad("tiered ratios must be at least 1".into());
        }
        if s.server_sizes.iter().any(|&v| v == 0) || s.cluster_scales.iter().any(|&v| v == 0) {
            return bad("sweep sizes must be positive".into());
        }
        if s.plane_counts.iter().any(|p| ![1, 2, 4, 8].contains(p)) {
            return bad("plane counts must be drawn from 1, 2, 4, 8".into());
        }
        Ok(())
    }
}
