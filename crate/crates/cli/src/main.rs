use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use betasmc::metrics::influence_profile;
use betasmc::models::{GeneralisedLikelihood, LikelihoodFamily, ObservationMap};
use betasmc_cli::config::{ExperimentConfig, ExperimentKind};
use betasmc_cli::experiment::{build_scenario, run_experiment, run_selection};
use betasmc_cli::io::{write_dataset, write_text};
use betasmc_cli::output::{prepare_dir, summary_json, write_experiment, write_selection};
use betasmc_cli::CliError;

#[derive(Parser)]
#[command(name = "betasmc", version, about = "Robust particle filtering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override base_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Override output_dir.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the simulated states and observations of one run.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Run every configured filter on every run and write metrics.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Choose β by predictive loss on tuning data.
    SelectBeta {
        #[command(flatten)]
        common: Common,
    },
    /// Run a GP experiment and write per-step smoothed estimates.
    GpSmooth {
        #[command(flatten)]
        common: Common,
    },
    /// Tabulate |d/dy log G| against the standardised residual.
    Influence {
        /// β values; repeat or separate with commas.
        #[arg(long, value_delimiter = ',', required = true)]
        beta: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Largest residual, in units of sigma.
        #[arg(long, default_value_t = 10.0)]
        max_d: f64,
        #[arg(long, default_value_t = 201)]
        points: usize,
        /// Output file; standard output when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.base_seed = s;
    }
    if common.workers.is_some() {
        cfg.workers = common.workers;
    }
    if let Some(d) = &common.output_dir {
        cfg.output_dir = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(files: &[PathBuf]) {
    for f in files {
        eprintln!("wrote {}", f.display());
    }
}

fn simulate(common: &Common, run: usize) -> Result<(), CliError> {
    let cfg = load(common)?;
    if run >= cfg.runs {
        return Err(CliError::Config(format!("run {run} out of range (runs = {})", cfg.runs)));
    }
    let scenario = build_scenario(&cfg)?;
    let (ys, flags) = scenario.observations(cfg.base_seed, run)?;
    prepare_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("dataset.csv");
    write_dataset(&path, &scenario.states, &ys, &flags)?;
    report(&[path]);
    Ok(())
}

fn run(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let res = run_experiment(cfg)?;
    let files = write_experiment(&cfg.output_dir, cfg, &res)?;
    report(&files);
    let failed = res.records.iter().filter(|r| r.outcome.is_err()).count();
    if failed == res.records.len() {
        return Err(CliError::Runtime("every filter run failed; see metrics.csv".into()));
    }
    if failed > 0 {
        eprintln!("{failed} of {} filter runs failed", res.records.len());
    }
    println!(
        "{}",
        serde_json::to_string(&summary_json(&res)).map_err(|e| CliError::Runtime(e.to_string()))?
    );
    Ok(())
}

fn select(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let sel = run_selection(cfg)?;
    let files = write_selection(&cfg.output_dir, cfg, &sel)?;
    report(&files);
    println!("{}", sel.selected_beta);
    Ok(())
}

fn influence(betas: &[f64], sigma: f64, max_d: f64, points: usize, output: Option<&Path>) -> Result<(), CliError> {
    if points < 2 || !(max_d > 0.0) {
        return Err(CliError::Config("influence needs points ≥ 2 and max-d > 0".into()));
    }
    let fam = LikelihoodFamily::new(
        ObservationMap::Linear(DMatrix::identity(1, 1)),
        betasmc::models::NoiseModel::Gaussian(betasmc::models::GaussianNoise::isotropic(1, sigma * sigma)?),
    )?;
    let ds: Vec<f64> = (0..points).map(|i| max_d * i as f64 / (points - 1) as f64).collect();
    let mut columns = vec![influence_profile(&GeneralisedLikelihood::standard(fam.clone()), &ds, sigma)?];
    for &b in betas {
        columns.push(influence_profile(&GeneralisedLikelihood::beta(fam.clone(), b)?, &ds, sigma)?);
    }
    let mut text = String::from("d,standard");
    for b in betas {
        text.push_str(&format!(",beta_{b}"));
    }
    text.push('\n');
    for (i, d) in ds.iter().enumerate() {
        text.push_str(&d.to_string());
        for c in &columns {
            text.push_str(&format!(",{}", c[i].1));
        }
        text.push('\n');
    }
    match output {
        Some(p) => {
            write_text(p, &text)?;
            report(&[p.to_path_buf()]);
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, run } => simulate(&common, run),
        Command::Run { common } => run(&load(&common)?),
        Command::SelectBeta { common } => select(&load(&common)?),
        Command::GpSmooth { common } => {
            let mut cfg = load(&common)?;
            if cfg.experiment != ExperimentKind::Gp {
                return Err(CliError::Config("gp-smooth needs experiment = \"gp\"".into()));
            }
            cfg.write_summaries = true;
            run(&cfg)
        }
        Command::Influence { beta, sigma, max_d, points, output } => {
            influence(&beta, sigma, max_d, points, output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
