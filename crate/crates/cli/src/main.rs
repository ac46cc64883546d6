use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bayes_evasion::harness::defender::Defender;
use bayes_evasion::harness::sep::attack_points;
use bayes_evasion::harness::{
    attack_trace, entropy_experiment, gen_synthetic, graybox_experiment, run_sep, sparsity_experiment,
    validate_gradients, EntropySpec, ExperimentConfig, GradCheckSpec, GrayboxSpec, SepTable, SparsitySpec, SynthSpec,
};
use bayes_evasion::rng::SeedTree;
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "bayes-evasion", version, about = "Evasion attacks on Bayesian predictive models")]
struct Cli {
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output_dir`, else `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Testbed {
    Point,
    Ppd,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the stochastic attack once and writes `trace.csv`.
    Attack {
        #[arg(long)]
        config: PathBuf,
        /// Attack radius; defaults to the largest in the grid.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Sweeps the epsilon grid and writes `sep.csv` and `sep_raw.csv`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Checks gradient estimators against closed forms; writes
    /// `gradcheck.csv` and `gradcheck_hist.csv`. Fails when an estimator is
    /// biased or the negative control goes undetected.
    ValidateGradients {
        /// Point-attack testbed; the n = 10 distribution testbed is derived from the same seed.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Entropy-target attacks on the blob classifier; writes `entropy.csv`
    /// and `entropy_raw.csv`.
    Entropy {
        /// JSON entropy settings; every field is optional.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// White-box against gray-box point attacks; writes `graybox.csv` and
    /// `graybox_raw.csv`.
    Graybox {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// L1 against L2 attack sparsity; writes `sparsity.csv`.
    Sparsity {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Writes a synthetic regression dataset as `synthetic.csv`.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        /// Use the correlated covariate design.
        #[arg(long)]
        correlated: bool,
    },
    /// Prints a default experiment config.
    Config {
        #[arg(value_enum, default_value = "point")]
        testbed: Testbed,
    },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_config(cli: &Cli, path: Option<&Path>, fallback: fn(u64) -> ExperimentConfig) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => fallback(0),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg_dir: Option<&Path>) -> Result<PathBuf> {
    let dir = cli.out.clone().or_else(|| cfg_dir.map(Path::to_path_buf)).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_table(table: &SepTable, dir: &Path, stem: &str) -> Result<()> {
    table.write_summary_csv(dir.join(format!("{stem}.csv")))?;
    table.write_raw_csv(dir.join(format!("{stem}_raw.csv")))?;
    for f in &table.failures {
        eprintln!(
            "warning: eps {} repetition {} {} failed: {}",
            f.epsilon, f.repetition, f.strategy, f.message
        );
    }
    println!("{:>8}  {:<12} {:<20} {:>12} {:>12} {:>4}", "epsilon", "strategy", "metric", "mean", "2se", "n");
    for s in table.aggregate() {
        println!(
            "{:>8.3}  {:<12} {:<20} {:>12.5e} {:>12.3e} {:>4}",
            s.epsilon, s.strategy, s.metric, s.mean, s.two_se, s.n
        );
    }
    println!("wrote {}", dir.join(format!("{stem}.csv")).display());
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Attack { config, epsilon } => {
            let cfg = load_config(cli, Some(config), ExperimentConfig::synthetic_point)?;
            let dir = out_dir(cli, Some(&cfg.output_dir))?;
            let defender = Defender::from_config(&cfg)?;
            let x = attack_points(&cfg, &defender)?.remove(0);
            let eps = match epsilon {
                Some(e) if *e >= 0.0 => *e,
                Some(e) => bail!("epsilon must be nonnegative, got {e}"),
                None => cfg.attack.epsilons.iter().cloned().fold(0.0, f64::max),
            };
            let trace = attack_trace(&cfg, &defender, &x, eps, &mut SeedTree::new(cfg.seed).rng(0))?;
            trace.write_csv(fs::File::create(dir.join("trace.csv"))?)?;
            let objectives = trace.objectives();
            println!("epsilon {eps}, {} iterations, {} posterior draws", objectives.len().saturating_sub(1), trace.total_samples());
            println!("objective {:.6} -> {:.6}", objectives[0], trace.final_residual);
            println!("x  {:?}", x.as_slice());
            println!("x' {:?}", trace.final_x.as_slice());
            println!("wrote {}", dir.join("trace.csv").display());
        }
        Command::Sweep { config } => {
            let cfg = load_config(cli, Some(config), ExperimentConfig::synthetic_point)?;
            let dir = out_dir(cli, Some(&cfg.output_dir))?;
            write_table(&run_sep(&cfg)?, &dir, "sep")?;
        }
        Command::ValidateGradients { config, replicates } => {
            let point = load_config(cli, config.as_deref(), ExperimentConfig::synthetic_point)?;
            let ppd = ExperimentConfig::synthetic_ppd(point.seed);
            let mut spec = GradCheckSpec::default();
            if let Some(r) = replicates {
                spec.replicates = *r;
            }
            let dir = out_dir(cli, config.as_ref().map(|_| point.output_dir.as_path()))?;
            let report = validate_gradients(&point, &ppd, &spec)?;
            report.write_csv(dir.join("gradcheck.csv"))?;
            report.write_histograms(dir.join("gradcheck_hist.csv"), spec.bins)?;
            println!("{:<22} {:>5} {:>12} {:>12} {:>10} {:>7}", "estimator", "coord", "analytic", "mean", "se", "z");
            for r in &report.rows {
                println!(
                    "{:<22} {:>5} {:>12.5} {:>12.5} {:>10.2e} {:>7.2}",
                    r.estimator.name(),
                    r.coordinate,
                    r.analytic,
                    r.mean,
                    r.se,
                    r.z
                );
            }
            println!("wrote {}", dir.join("gradcheck.csv").display());
            if !report.passed() {
                eprintln!("gradient validation failed");
                return Ok(ExitCode::FAILURE);
            }
            println!("gradient validation passed");
        }
        Command::Entropy { config } => {
            let spec: EntropySpec = match config {
                Some(p) => read_json(p)?,
                None => EntropySpec::default(),
            };
            let dir = out_dir(cli, None)?;
            let out = entropy_experiment(cli.seed.unwrap_or(0), &spec)?;
            println!("sampler acceptance rate {:.3}", out.acceptance_rate);
            write_table(&out.table, &dir, "entropy")?;
        }
        Command::Graybox { config, seeds } => {
            let cfg = load_config(cli, config.as_deref(), ExperimentConfig::synthetic_point)?;
            let mut spec = GrayboxSpec::default();
            if let Some(s) = seeds {
                spec.seeds = *s;
            }
            let dir = out_dir(cli, config.as_ref().map(|_| cfg.output_dir.as_path()))?;
            write_table(&graybox_experiment(&cfg, &spec)?, &dir, "graybox")?;
        }
        Command::Sparsity { config } => {
            let spec: SparsitySpec = match config {
                Some(p) => read_json(p)?,
                None => SparsitySpec::default(),
            };
            let dir = out_dir(cli, None)?;
            let runs = sparsity_experiment(cli.seed.unwrap_or(0), &spec)?;
            let path = dir.join("sparsity.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["seed", "l1_zeros", "l2_zeros"])?;
            for r in &runs {
                println!("seed {:>3}: L1 zeros {:>3}, L2 zeros {:>3}", r.seed, r.l1_zeros, r.l2_zeros);
                w.write_record([r.seed.to_string(), r.l1_zeros.to_string(), r.l2_zeros.to_string()])?;
            }
            w.flush()?;
            println!("wrote {}", path.display());
        }
        Command::Synth { config, n, correlated } => {
            let mut spec: SynthSpec = match config {
                Some(p) => read_json(p)?,
                None if *correlated => SynthSpec::correlated(1000),
                None => SynthSpec::default(),
            };
            if let Some(n) = n {
                spec.n = *n;
            }
            let dir = out_dir(cli, None)?;
            let data = gen_synthetic(&spec, &mut SeedTree::new(cli.seed.unwrap_or(0)).rng(0))?;
            let path = dir.join("synthetic.csv");
            let mut w = csv::Writer::from_path(&path)?;
            let mut header: Vec<String> = (0..data.dim()).map(|i| format!("x{i}")).collect();
            header.push("y".into());
            w.write_record(&header)?;
            for i in 0..data.len() {
                let mut row: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
                row.push(data.y()[i].to_string());
                w.write_record(&row)?;
            }
            w.flush()?;
            println!("wrote {} rows to {}", data.len(), path.display());
        }
        Command::Config { testbed } => {
            let seed = cli.seed.unwrap_or(0);
            let cfg = match testbed {
                Testbed::Point => ExperimentConfig::synthetic_point(seed),
                Testbed::Ppd => ExperimentConfig::synthetic_ppd(seed),
            };
            println!("{}", serde_json::to_string_pretty(&cfg)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(if cli.verbose { tracing::Level::INFO } else { tracing::Level::WARN })
        .init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
