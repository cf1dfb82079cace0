//! Experiment orchestration: suites, sweeps and report files.

pub mod config;
pub mod report;
pub mod run;
pub mod sweep;
pub mod validate;

pub use config::{Arch, ArchSelect, ExperimentConfig, ModelSelect, SweepAxis, SweepConfig, TorusConfig};
pub use report::{emit_reports, write_reports, ReportRow};
pub use run::{evaluate_one, evaluate_suite, group_label, grouped_aggregates, Failure, Scenario, SuiteResult, WorkloadResult};
pub use validate::{run_oracles, OracleCheck};
pub use sweep::{run_dissection, run_points, run_sweep, sweep_points, PointKey, PointResult};

impl ExperimentConfig {
    /// Baseline scenario for `arch` at the configured cluster size.
    pub fn scenario(&self, arch: Arch) -> Scenario {
        Scenario {
            arch,
            cluster_size: self.cluster_size,
            torus: self.torus.clone(),
            rail: self.rail.clone(),
            inc: false,
            a2a_routing: self.a2a_routing,
            coefficients: self.coefficients.clone(),
            constraints: self.constraints.clone(),
        }
    }
}
