use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use switcheff::experiment::{
    emit_reports, run_dissection, run_oracles, run_sweep, ArchSelect, ExperimentConfig, ModelSelect, PointResult,
    SweepAxis,
};
use switcheff::metrics::Weighting;

#[derive(Parser, Debug)]
#[command(name = "switcheff", version, about = "Switching-efficiency analysis of AI datacenter fabrics")]
struct Cli {
    /// TOML config; unset fields take the baseline defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    arch: Option<ArchSelect>,
    /// Cluster size in GPUs.
    #[arg(long, global = true)]
    scale: Option<usize>,
    #[arg(long, global = true, value_enum)]
    model: Option<ModelSelect>,
    #[arg(long, global = true, value_enum)]
    sweep: Option<SweepAxis>,
    /// Parent directory for run directories.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_weighting)]
    weighting: Option<Weighting>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the full workload suites at baseline.
    Dissect,
    /// Evaluate one parameter sweep (needs --sweep or sweep.axis).
    Sweep,
    /// Check the simulator against closed-form bottleneck cases.
    Validate,
    /// Print the effective configuration.
    ShowConfig,
}

fn parse_weighting(s: &str) -> Result<Weighting, String> {
    match s {
        "duration" => Ok(Weighting::Duration),
        "equal" => Ok(Weighting::Equal),
        _ => Err(format!("expected duration or equal, got {s}")),
    }
}

fn effective_config(cli: &Cli) -> switcheff::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(a) = cli.arch {
        cfg.arch = a;
    }
    if let Some(n) = cli.scale {
        cfg.cluster_size = n;
    }
    if let Some(m) = cli.model {
        cfg.model = m;
    }
    if let Some(s) = cli.sweep {
        cfg.sweep.axis = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(w) = cli.weighting {
        cfg.weighting = w;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn summarize(points: &[PointResult]) {
    println!("experiment\tarch\tmodel\tvalue\tvariant\tgamma\tdelta\ttheta\tmu\teta\tworkloads\tfailed");
    for p in points {
        let head = format!(
            "{}\t{}\t{}\t{}\t{}",
            p.experiment,
            p.arch.name(),
            p.model.name(),
            p.value,
            p.variant
        );
        match (p.all(), &p.error) {
            (_, Some(e)) => println!("{head}\terror: {e}"),
            (Some(a), None) => println!(
                "{head}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}",
                a.gamma_bar,
                a.delta_bar,
                a.theta_bar,
                a.mu_bar,
                a.eta_bar,
                p.workloads.len(),
                p.failures.len()
            ),
            (None, None) => println!("{head}\t-\t-\t-\t-\t-\t0\t{}", p.failures.len()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match effective_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if cfg.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let (command, points) = match cli.command {
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            return ExitCode::SUCCESS;
        }
        Command::Validate => {
            let checks = match run_oracles() {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let mut ok = true;
            for c in &checks {
                println!(
                    "{}\t{}\texpected {} ({})\tgot {}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.expected,
                    c.rule,
                    c.actual
                );
                ok &= c.pass;
            }
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(2) };
        }
        Command::Dissect => ("dissect", run_dissection(&cfg)),
        Command::Sweep => match run_sweep(&cfg) {
            Ok(p) => ("sweep", p),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        },
    };
    summarize(&points);
    match emit_reports(&cfg, command, &points) {
        Ok(dir) => eprintln!("reports written to {}", dir.display()),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    if points.iter().any(PointResult::is_partial) {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}
