use std::path::PathBuf;
use std::process::ExitCode;

use cbjj::experiments::{run, ExperimentConfig, ExperimentKind};
use cbjj::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cbjj", version, about = "Resonator + current-biased junction photon detector experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Bias points (overrides the config), e.g. --bias 0.9 --bias 0.92
    #[arg(long = "bias", global = true)]
    biases: Vec<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Band structure and bound-state census
    Spectrum,
    /// Phase densities of the lowest bound states
    PhaseDist,
    /// Signal and dark switching runs and the efficiency curve
    Dynamics,
    /// Efficiency or spectrum sweeps: eff_vs_beta, eff_vs_I, eff_vs_freq, spectrum_sweep
    Sweep { kind: String },
    /// Cross-Kerr table
    Kerr,
    /// Second-mode admixture estimate
    Validity,
}

fn load(common: &Common, kind: ExperimentKind) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.kind = kind;
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if !common.biases.is_empty() {
        cfg.biases = common.biases.clone();
        cfg.bias_range = None;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind = match &cli.command {
        Command::Spectrum => ExperimentKind::SpectrumSweep,
        Command::PhaseDist => ExperimentKind::PhaseDist,
        Command::Dynamics => ExperimentKind::Dynamics,
        Command::Kerr => ExperimentKind::KerrTable,
        Command::Validity => ExperimentKind::ValidityCheck,
        Command::Sweep { kind } => match kind.parse::<ExperimentKind>() {
            Ok(k @ (ExperimentKind::EffVsBeta
            | ExperimentKind::EffVsBias
            | ExperimentKind::EffVsFreq
            | ExperimentKind::SpectrumSweep)) => k,
            _ => {
                eprintln!("error: unknown sweep `{kind}` (eff_vs_beta, eff_vs_I, eff_vs_freq, spectrum_sweep)");
                return ExitCode::from(1);
            }
        },
    };
    let cfg = match load(&cli.common, kind) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cfg) {
        Ok(rep) => {
            for f in &rep.files {
                println!("{}", f.display());
            }
            if rep.complete() {
                ExitCode::SUCCESS
            } else {
                for f in &rep.failures {
                    eprintln!("failed: {f}");
                }
                ExitCode::from(2)
            }
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
