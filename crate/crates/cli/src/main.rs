use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use harnack_lab::experiment::{
    calibrate_tolerances, output_dir, run_experiment, simulate, CheckKind, ExperimentConfig,
    RunReport,
};
use harnack_lab::LabError;

/// Ricci flow, conjugate heat solves and Harnack-estimate verification.
#[derive(Parser)]
#[command(name = "harnack-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the flow and the conjugate heat equation; write the fields.
    Simulate(Common),
    /// Evolution identities, conjugacy and conservation residuals.
    VerifyIdentities(Common),
    /// The pointwise differential Harnack quantity.
    Harnack(Common),
    /// Pairwise Harnack ratio estimates.
    Ratio(Common),
    /// Cutoff certification and the localized estimate.
    Localize(Common),
    /// Fit tolerance constants at half and full resolution.
    Calibrate(Common),
    /// Run the checks selected in the config (all by default).
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory. Defaults to the config's `out`, then $HARNACK_LAB_OUT,
    /// then ./harnack-out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random pairs and test fields.
    #[arg(long)]
    seed: Option<u64>,
    /// Grid nodes per axis.
    #[arg(long)]
    resolution: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, LabError> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            config.out = Some(out.clone());
        }
        if let Some(seed) = self.seed {
            config.checks.seed = seed;
        }
        if let Some(n) = self.resolution {
            config.geometry.resolution = n;
        }
        Ok(config)
    }
}

fn only(mut config: ExperimentConfig, kind: CheckKind) -> ExperimentConfig {
    config.checks.select = vec![kind.name().to_string()];
    config
}

fn finish(report: RunReport) -> ExitCode {
    print!("{}", report.summary());
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(cli: Cli) -> Result<ExitCode, LabError> {
    let code = match cli.command {
        Command::Simulate(c) => {
            let report = simulate(&c.load()?)?;
            finish(report)
        }
        Command::VerifyIdentities(c) => {
            finish(run_experiment(&only(c.load()?, CheckKind::Identities))?)
        }
        Command::Harnack(c) => finish(run_experiment(&only(c.load()?, CheckKind::Harnack))?),
        Command::Ratio(c) => finish(run_experiment(&only(c.load()?, CheckKind::Ratio))?),
        Command::Localize(c) => finish(run_experiment(&only(c.load()?, CheckKind::Localize))?),
        Command::Report(c) => finish(run_experiment(&c.load()?)?),
        Command::Calibrate(c) => {
            let config = c.load()?;
            let record = calibrate_tolerances(&config)?;
            let dir = output_dir(&config);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("calibration.toml");
            std::fs::write(&path, record.to_toml())?;
            for f in &record.families {
                println!(
                    "{:<10} A = {:.6e}  order = {:.3}  residual {:.3e} -> {:.3e}",
                    f.family, f.a, f.order, f.coarse, f.fine
                );
            }
            println!("sha256:{}", record.hash);
            println!("wrote {}", path.display());
            ExitCode::SUCCESS
        }
    };
    Ok(code)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
