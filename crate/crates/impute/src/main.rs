use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use impute::sweep::{sweep_frequencies, sweep_ratios};
use impute::{run_experiment, Baseline, ExperimentConfig, InitMethod, MechanismName, ModeName};

/// Missing-value imputation experiments on CSV tables.
#[derive(Parser)]
#[command(name = "impute", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mask, impute and evaluate over several seeds.
    Run(RunArgs),
    /// Repeat `run` over a grid of missing ratios or update frequencies.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        ratios: Vec<f64>,
        /// Values of `--reconstruct-every` to compare.
        #[arg(long, value_delimiter = ',')]
        frequencies: Vec<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, value_enum, default_value = "mcar")]
    mechanism: MechanismName,
    #[arg(long, default_value_t = 0.3)]
    ratio: f64,
    #[arg(long, default_value_t = 0.5)]
    feature_fraction: f64,
    /// Model modes to train; `--mode none` runs baselines only.
    #[arg(long, value_delimiter = ',', default_value = "igrm")]
    mode: Vec<String>,
    #[arg(long, value_enum, default_value = "random")]
    init: InitMethod,
    #[arg(long, value_enum, value_delimiter = ',')]
    baseline: Vec<Baseline>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    reconstruct_every: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// JSON object whose keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Continue from checkpoints in the output directory.
    #[arg(long)]
    resume: bool,
}

fn parse_modes(raw: &[String]) -> Result<Vec<ModeName>, String> {
    if raw.len() == 1 && raw[0] == "none" {
        return Ok(Vec::new());
    }
    raw.iter()
        .map(|m| <ModeName as clap::ValueEnum>::from_str(m, true).map_err(|_| format!("unknown mode `{m}` (igrm, grape, no-gae, once-gae, none)")))
        .collect()
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, impute::Error> {
        let d = ExperimentConfig::default();
        let cfg = ExperimentConfig {
            data: self.data.clone(),
            schema: self.schema.clone(),
            mechanism: self.mechanism,
            ratio: self.ratio,
            feature_fraction: self.feature_fraction,
            modes: parse_modes(&self.mode).map_err(impute::Error::Config)?,
            init: self.init,
            baselines: self.baseline.clone(),
            epochs: self.epochs.unwrap_or(d.epochs),
            reconstruct_every: self.reconstruct_every.unwrap_or(d.reconstruct_every),
            seeds: self.seeds.clone().unwrap_or(d.seeds.clone()),
            out: self.out.clone(),
            checkpoint_every: self.checkpoint_every,
            resume: self.resume,
            ..d
        };
        let cfg = match &self.config {
            Some(path) => cfg.with_override_file(path)?,
            None => cfg,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), impute::Error> {
    let pool = impute::thread_pool()?;
    match cli.command {
        Command::Run(args) => {
            let cfg = args.config()?;
            let outcome = pool.install(|| run_experiment(&cfg))?;
            for m in &outcome.report.methods {
                println!("{:<9} MAE x10 {:.4} ± {:.4}", m.method, m.mae_x10.mean, m.mae_x10.std);
            }
            println!("outputs in {}", cfg.out.display());
        }
        Command::Sweep { run, ratios, frequencies } => {
            let cfg = run.config()?;
            if ratios.is_empty() && frequencies.is_empty() {
                return Err(impute::Error::Config("give --ratios and/or --frequencies".into()));
            }
            if !ratios.is_empty() {
                for r in pool.install(|| sweep_ratios(&cfg, &ratios))? {
                    println!("{:<9} ratio {:<4} MAE x10 {:.4} ± {:.4}", r.method, r.ratio, r.mae_x10_mean, r.mae_x10_std);
                }
            }
            if !frequencies.is_empty() {
                for r in pool.install(|| sweep_frequencies(&cfg, &frequencies))? {
                    println!(
                        "{:<9} every {:<5} MAE x10 {:.4} ± {:.4}  train {:.1}s  speedup {:.2}",
                        r.method, r.reconstruct_every, r.mae_x10_mean, r.mae_x10_std, r.train_seconds, r.speedup
                    );
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    impute::tune_allocator();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
