use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use t2star_cli::experiment;
use t2star_cli::{CliError, CliResult, ExperimentConfig};
use t2star_core::ReconMethod;

/// Compressive-sensing R2* mapping experiments on synthetic phantoms.
#[derive(Parser)]
#[command(name = "t2star", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Options that override the matching configuration keys.
#[derive(Args)]
struct Common {
    /// TOML configuration; built-in defaults when absent.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "T2STAR_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Comma-separated sampling rates.
    #[arg(long, global = true, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    /// Comma-separated methods: decoupled, joint, model.
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Comma-separated phantom seeds, one slice each.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// fixed or complementary.
    #[arg(long, global = true)]
    scheme: Option<String>,
    #[arg(long, global = true)]
    noise_sigma: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated k-space and ground truth for one slice.
    Simulate {
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Reconstruct a stored k-space file.
    Recon {
        kspace: PathBuf,
        #[arg(long, default_value = "joint")]
        method: String,
        /// Ground-truth maps from `simulate`, for error reporting.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Every (slice, rate, method) of the configuration.
    Sweep,
    /// Joint recovery under fixed and complementary patterns.
    CompareSchemes,
    /// Grid search of the regularization weights.
    Tune,
    /// Render one map of a map file as PGM.
    Export {
        maps: PathBuf,
        #[arg(long, default_value = "r2star")]
        name: String,
        /// `lo,hi`; the data range when absent.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        window: Option<Vec<f64>>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &common.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = &common.rates {
        cfg.sampling.rates = v.clone();
    }
    if let Some(v) = &common.methods {
        cfg.recon.methods = v.clone();
    }
    if let Some(v) = &common.seeds {
        cfg.phantom.seeds = v.clone();
    }
    if let Some(v) = &common.scheme {
        cfg.sampling.scheme = v.clone();
    }
    if let Some(v) = common.noise_sigma {
        cfg.acquisition.noise_sigma = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Simulate { rate } => {
            let rate = rate.unwrap_or(cfg.sampling.rates[0]);
            let (k, t) = experiment::simulate(&cfg, cfg.phantom.seeds[0], rate)?;
            println!("{}\n{}", k.display(), t.display());
        }
        Command::Recon { kspace, method, truth } => {
            let method: ReconMethod = method.parse().map_err(|e: t2star_core::Error| CliError::Config(e.to_string()))?;
            let (maps, errors) = experiment::recon_file(&cfg, &kspace, method, truth.as_deref())?;
            println!("{}", maps.display());
            if let Some((r2, x0)) = errors {
                println!("r2star_error {r2:.6}\nx0_error {x0:.6}");
            }
        }
        Command::Sweep => {
            let summary = experiment::run_experiment(&cfg)?;
            for r in &summary.rows {
                println!(
                    "slice {} rate {:.3} {:<9} r2* {:.4} x0 {:.4}{}",
                    r.slice,
                    r.rate,
                    r.method.name(),
                    r.r2star_error,
                    r.x0_error,
                    if r.converged { "" } else { " (budget)" }
                );
            }
            println!("wrote {}", summary.output_dir.join("metrics.csv").display());
            summary.check_convergence()?;
        }
        Command::CompareSchemes => {
            let cmp = experiment::compare_schemes(&cfg)?;
            for (rate, f, c) in cmp.medians() {
                println!("rate {rate:.3} fixed {f:.4} complementary {c:.4}");
            }
        }
        Command::Tune => {
            let out = experiment::tune(&cfg)?;
            let p = &out.params;
            println!(
                "lambda1 {:e} lambda2 {:e} lambda3 {:e} lambda {:e} rho {:e}",
                p.lambda1, p.lambda2, p.lambda3, p.lambda, p.rho
            );
            println!("stage scores {:.4} {:.4} {:.4}", out.best[0], out.best[1], out.best[2]);
        }
        Command::Export { maps, name, window, out } => {
            let window = match window.as_deref() {
                None => None,
                Some(&[lo, hi]) => Some((lo, hi)),
                Some(_) => return Err(CliError::Config("--window takes lo,hi".into())),
            };
            experiment::export(&maps, &name, window, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
