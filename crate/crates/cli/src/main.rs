use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use plo_cli::commands::{cmd_experiment, cmd_obfuscate, cmd_opf, ObfuscateArgs, Study};
use plo_cli::{CliError, ExperimentConfig, Result};
use plo_core::attack::Strategy;
use plo_core::dp::PrivacyParams;

/// Differentially private obfuscation of power-network line parameters.
#[derive(Debug, Parser)]
#[command(name = "plo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the AC optimal power flow of a case file
    Opf { case: PathBuf },
    /// Release an obfuscated copy of a case file
    Obfuscate {
        case: PathBuf,
        #[command(flatten)]
        privacy: Privacy,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, default_value_t = 0.01)]
        beta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// horizon of a multi-step release
        #[arg(long, requires = "multistep_r")]
        multistep_h: Option<usize>,
        /// constrained steps of a multi-step release
        #[arg(long, requires = "multistep_h")]
        multistep_r: Option<usize>,
        /// first and last load factor of the multi-step horizon
        #[arg(long, value_delimiter = ',', default_values_t = [0.8, 1.1])]
        profile: Vec<f64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run seeded obfuscation, attack and similarity studies
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
struct Privacy {
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// largest mean-deviation factor tried before giving up
    #[arg(long, default_value_t = PrivacyParams::DEFAULT_LAMBDA)]
    lambda_bound: f64,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(required = true)]
    cases: Vec<PathBuf>,
    /// all, obfuscation, attack or similarity
    #[arg(long, default_value = "all")]
    study: String,
    #[command(flatten)]
    privacy: Privacy,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-3, 1e-2, 1e-1, 1.0])]
    alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-1])]
    beta: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// master seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// attack budgets in percent of lines
    #[arg(long, value_delimiter = ',', default_values_t = [5.0, 10.0, 15.0])]
    budget: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values = ["random", "obfuscated_flow", "real_flow"])]
    strategy: Vec<String>,
    #[arg(long, default_value_t = 31)]
    multistep_h: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 4, 16, 31])]
    multistep_r: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.8, 1.1])]
    profile: Vec<f64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn pair(v: &[f64]) -> Result<(f64, f64)> {
    match v {
        [lo, hi] => Ok((*lo, *hi)),
        _ => Err(CliError::Usage("--profile takes two load factors, LO,HI".into())),
    }
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let strategies = a
        .strategy
        .iter()
        .map(|s| s.parse::<Strategy>())
        .collect::<plo_core::Result<Vec<_>>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let cfg = ExperimentConfig {
        epsilon: a.privacy.epsilon,
        alphas: a.alpha,
        betas: a.beta,
        lambda_bound: a.privacy.lambda_bound,
        runs: a.runs,
        budgets: a.budget,
        strategies,
        horizon: a.multistep_h,
        steps: a.multistep_r,
        profile: pair(&a.profile)?,
        master_seed: a.seed,
    };
    let written = cmd_experiment(&a.cases, &cfg, a.study.parse::<Study>()?, &a.out)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Opf { case } => cmd_opf(&case, &mut std::io::stdout().lock()),
        Command::Obfuscate {
            case,
            privacy,
            alpha,
            beta,
            seed,
            multistep_h,
            multistep_r,
            profile,
            out,
        } => {
            let args = ObfuscateArgs {
                params: PrivacyParams::new(privacy.epsilon, alpha, beta, privacy.lambda_bound)?,
                seed,
                multistep: multistep_h.zip(multistep_r),
                profile: pair(&profile)?,
                out,
            };
            let (case_path, json_path, res) = cmd_obfuscate(&case, &args)?;
            println!(
                "released {} (cost {:.4}, lambda {}, status {})",
                case_path.display(),
                res.cost_out,
                res.lambda_used,
                res.status
            );
            println!("{}", json_path.display());
            Ok(())
        }
        Command::Experiment(a) => experiment(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PLO_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
