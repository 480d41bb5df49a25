use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use vaecert::certificates::CertificateKind;
use vaecert::data::DatasetSpec;
use vaecert::experiment::{self, DiameterChoice, ExperimentConfig, Target};

#[derive(Parser)]
#[command(name = "vaecert", version, about = "Train Lipschitz VAEs and compute their risk certificates")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Pin the bounded-loss diameter to 2.668 (2-Gaussian) and 3.8 (circle).
    #[arg(long, global = true)]
    exact_match: bool,
    /// Dataset when no configuration file is given.
    #[arg(long, global = true, value_enum, default_value_t = Dataset::TwoGaussians)]
    dataset: Dataset,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dataset {
    TwoGaussians,
    Circle,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Generated,
    Regenerated,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/val/test splits and their metadata.
    GenData,
    /// Train one model per beta on the training split.
    Train,
    /// Compute certificates for trained checkpoints.
    Certify {
        /// Checkpoints to certify; defaults to the whole beta grid.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
    },
    /// Compare empirical W1 against the regeneration and generation bounds.
    EvalW1 {
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Points per side of each assignment problem.
        #[arg(long)]
        m: Option<usize>,
        /// Resampling seeds (repeatable).
        #[arg(long = "w1-seed")]
        w1_seeds: Vec<u64>,
    },
    /// Run the full pipeline for both synthetic datasets and write the tables.
    ReproduceTables,
    /// Draw samples from a trained model.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1000)]
        m: usize,
        #[arg(long, value_enum, default_value_t = TargetArg::Generated)]
        target: TargetArg,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(match cli.dataset {
            Dataset::TwoGaussians => DatasetSpec::TwoGaussians,
            Dataset::Circle => DatasetSpec::Circle,
        }),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if cli.exact_match {
        cfg.certificate.diameter = DiameterChoice::ExactMatch;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::GenData => {
            let (_, meta) = experiment::cmd_gen_data(&cfg)?;
            println!(
                "{} splits {:?} written to {} (analytic diameter {})",
                meta.kind,
                meta.split_sizes,
                cfg.output_dir.display(),
                meta.analytic_diameter.map_or("n/a".into(), |d| d.to_string())
            );
        }
        Command::Train => {
            for ck in experiment::cmd_train(&cfg)? {
                let first = ck.history.first().context("empty history")?;
                let last = ck.history.last().context("empty history")?;
                println!(
                    "beta {:<6} mse {:.4} -> {:.4}  kl {:.4} -> {:.4}",
                    ck.beta(),
                    first.mean_mse,
                    last.mean_mse,
                    first.mean_kl,
                    last.mean_kl
                );
            }
        }
        Command::Certify { checkpoints } => {
            println!("{:<6} {:<22} {:>9} {:>9} {:>10}", "beta", "kind", "test_rec", "emp_rec", "bound");
            for o in experiment::cmd_certify(&cfg, &checkpoints)? {
                for r in &o.reports {
                    println!(
                        "{:<6} {:<22} {:>9.4} {:>9.4} {:>10.4}",
                        o.beta,
                        r.kind.name(),
                        o.test_rec,
                        r.components.emp_rec,
                        r.bound
                    );
                }
            }
        }
        Command::EvalW1 { checkpoints, m, w1_seeds } => {
            if let Some(m) = m {
                cfg.w1.m = m;
            }
            if !w1_seeds.is_empty() {
                cfg.w1.seeds = w1_seeds;
            }
            if !cfg.certificate.kinds.iter().any(|k| {
                matches!(
                    k,
                    CertificateKind::RegenBounded
                        | CertificateKind::GenBounded
                        | CertificateKind::RegenManifold
                        | CertificateKind::GenManifold
                )
            }) {
                cfg.certificate.kinds.extend([CertificateKind::RegenBounded, CertificateKind::GenBounded]);
            }
            let rows = experiment::cmd_eval_w1(&cfg, &checkpoints)?;
            println!("{:<6} {:>5} {:<12} {:<14} {:>9} {:>9}", "beta", "seed", "target", "kind", "w1", "bound");
            for r in &rows {
                println!(
                    "{:<6} {:>5} {:<12} {:<14} {:>9.4} {:>9.4}{}",
                    r.beta,
                    r.seed,
                    r.target.name(),
                    r.kind.name(),
                    r.w1,
                    r.bound,
                    if r.holds() { "" } else { "  VIOLATED" }
                );
            }
            return Ok(rows.iter().all(|r| r.holds()));
        }
        Command::ReproduceTables => {
            for t in experiment::cmd_reproduce_tables(&cfg)? {
                println!("{} -> {}", t.dataset.name(), t.table.display());
                println!("{:>6} {:>9} {:>9} {:>9} {:>9} {:>10} {:>10}", "beta", "test_rec", "emp_rec", "emp_kl", "avg_dist", "exp_moment", "bound");
                for r in &t.rows {
                    println!(
                        "{:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.3} {:>10.4} {:>10.4}",
                        r.beta, r.test_rec, r.emp_rec, r.emp_kl, r.avg_dist, r.exp_moment, r.bound
                    );
                }
            }
        }
        Command::Sample { checkpoint, m, target } => {
            let target = match target {
                TargetArg::Generated => Target::Generated,
                TargetArg::Regenerated => Target::Regenerated,
            };
            let x = experiment::cmd_sample(&cfg, &checkpoint, m, target)?;
            println!("{} {} samples of dimension {}", x.rows(), target.name(), x.cols());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: some empirical W1 values exceed their certificate");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
