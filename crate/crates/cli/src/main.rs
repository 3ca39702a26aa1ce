use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use jointfleet::config::{ExperimentConfig, RunMode};
use jointfleet::demand::write_trip_records;
use jointfleet::engine::{synthetic_requests, BaselineMode};
use jointfleet::experiment::{self, BaselineReport, CHECKPOINT_FILE};

/// Exit status for bad input files (missing config, missing report).
const EXIT_INPUT: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "jointfleet",
    version,
    about = "Joint passenger and goods fleet simulator with learned dispatch"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a dispatch policy and write checkpoints, a training curve and a summary.
    Train(RunArgs),
    /// Evaluate a frozen policy on held-out seeds for each baseline.
    Eval(RunArgs),
    /// Train and/or evaluate as selected by the config's `mode`.
    Run(RunArgs),
    /// Compare evaluation reports side by side.
    Compare(CompareArgs),
    /// Write the synthetic workload of one episode as a trip-record CSV.
    GenData(GenArgs),
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Experiment config (TOML). Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Episode seed (train: first episode; eval: the single held-out seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Ticks per episode.
    #[arg(long)]
    ticks: Option<u64>,
    /// Vehicle/matching configuration to run.
    #[arg(long, value_parser = parse_baseline)]
    baseline: Option<BaselineMode>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, env = "JOINTFLEET_OUT")]
    out: Option<PathBuf>,
    /// Checkpoint to resume training from, or to evaluate.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Report files written by `eval`.
    #[arg(required = true, num_args = 1..)]
    reports: Vec<PathBuf>,
    /// Directory for `comparison.json`; printed only when omitted.
    #[arg(long, env = "JOINTFLEET_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    /// Destination CSV file.
    #[arg(long)]
    out: PathBuf,
}

fn parse_baseline(s: &str) -> Result<BaselineMode, String> {
    BaselineMode::parse(s).ok_or_else(|| {
        let names: Vec<&str> = BaselineMode::ALL.iter().map(|b| b.name()).collect();
        format!(
            "unknown baseline '{s}' (expected one of {})",
            names.join(", ")
        )
    })
}

/// An error that maps to [`EXIT_INPUT`].
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(InputError(format!("{what} not found: {}", path.display())).into())
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            require_file(path, "config file")?;
            ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(t) = common.ticks {
        cfg.sim.ticks = t;
    }
    Ok(cfg)
}

fn train_config(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = load_config(&args.common)?;
    if let Some(seed) = args.common.seed {
        cfg.sim.seed = seed;
    }
    if let Some(b) = args.common.baseline {
        cfg.sim.baseline = b;
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn eval_config(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = load_config(&args.common)?;
    if let Some(seed) = args.common.seed {
        cfg.eval.seeds = vec![seed];
    }
    if let Some(b) = args.common.baseline {
        cfg.eval.baselines = vec![b];
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let (cfg, out) = train_config(args)?;
    if let Some(path) = &args.checkpoint {
        require_file(path, "checkpoint")?;
    }
    let summary = experiment::train(&cfg, &out, args.checkpoint.as_deref())?;
    for ep in &summary.episodes {
        println!(
            "episode {} seed {} step {} accept {:.3} active {:.3}",
            ep.episode,
            ep.seed,
            ep.step_after,
            ep.metrics.accept_rate.overall,
            ep.metrics.active_vehicle_ratio
        );
    }
    println!(
        "checkpoint {} (step {}, sha256 {})",
        summary.checkpoint.display(),
        summary.final_step,
        summary.params_sha256
    );
    Ok(())
}

fn print_reports(reports: &[BaselineReport]) {
    let named: Vec<(String, BaselineReport)> = reports
        .iter()
        .map(|r| (r.baseline.name().to_string(), r.clone()))
        .collect();
    print!("{}", experiment::comparison_table(&named));
}

fn cmd_eval(args: &RunArgs) -> Result<()> {
    let (cfg, out) = eval_config(args)?;
    if let Some(path) = &args.checkpoint {
        require_file(path, "checkpoint")?;
    }
    let reports = experiment::evaluate(&cfg, args.checkpoint.as_deref(), &out)?;
    print_reports(&reports);
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let (cfg, out) = train_config(args)?;
    let mut checkpoint = args.checkpoint.clone();
    if matches!(cfg.mode, RunMode::Train | RunMode::Both) {
        cmd_train(args)?;
        checkpoint = Some(out.join(CHECKPOINT_FILE));
    }
    if matches!(cfg.mode, RunMode::Eval | RunMode::Both) {
        let eval_args = RunArgs {
            common: Common {
                seed: None,
                ..args.common.clone()
            },
            out: Some(out),
            checkpoint,
        };
        cmd_eval(&eval_args)?;
    }
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let mut reports = Vec::new();
    for path in &args.reports {
        require_file(path, "report")?;
        let report =
            BaselineReport::load(path).with_context(|| format!("reading {}", path.display()))?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("report")
            .to_string();
        reports.push((name, report));
    }
    print!("{}", experiment::comparison_table(&reports));
    let pairs = experiment::compare(&reports);
    for pair in &pairs {
        println!("\n{} vs {}", pair.a, pair.b);
        for d in &pair.deltas {
            println!("  {:<28}{:>+12.4}  {}", d.metric, d.delta, d.verdict);
        }
    }
    if let Some(out) = &args.out {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let path = out.join("comparison.json");
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &pairs)?;
        println!("\nwrote {}", path.display());
    }
    Ok(())
}

fn cmd_gen_data(args: &GenArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(seed) = args.common.seed {
        cfg.sim.seed = seed;
    }
    let requests = synthetic_requests(&cfg.sim)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file =
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_trip_records(BufWriter::new(file), &requests)?;
    println!(
        "wrote {} requests to {}",
        requests.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::GenData(a) => cmd_gen_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<InputError>().is_some() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
